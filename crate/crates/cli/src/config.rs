//! Run configuration, read from TOML.
//!
//! ```toml
//! [grid]
//! n = 64
//!
//! [physics]
//! nu = 0.01
//!
//! [time]
//! t_end = 1.0
//! dt_max = 0.01
//! cfl = 0.5
//!
//! [initial]
//! kind = "perturbed-identity"   # taylor-green | steady-identity | perturbed-identity
//!                               # | manufactured | from-snapshot
//! amplitude = 0.1               # perturbed-identity only
//! analytic = "smooth"           # manufactured only: smooth | taylor-green-decay | steady-identity
//! path = "snap.bin"             # from-snapshot only
//!
//! [output]
//! dir = "out"
//! snapshot_interval = 0
//! diagnostics_interval = 1
//!
//! [certificates]
//! strict = false
//! energy_tol = 1e-5
//! lp_tol = 1e-5
//!
//! [limits]
//! blowup_ceiling = 1e6
//! ```
//!
//! Every key has a default; unknown keys are rejected.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vspc_core::diagnostics::CertificateSettings;
use vspc_core::exact::{manufactured, AnalyticChoice};
use vspc_core::snapshot::read_snapshot;
use vspc_core::solver::{perturbed_identity, taylor_green};
use vspc_core::{GridSpec, SolverConfig, State, TensorField};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub time: TimeSection,
    pub initial: InitialSection,
    pub output: OutputSection,
    pub certificates: CertificateSettings,
    pub limits: LimitsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_end: f64,
    pub dt_max: f64,
    pub cfl: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt_max: 0.01,
            cfl: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    #[default]
    TaylorGreen,
    SteadyIdentity,
    PerturbedIdentity,
    Manufactured,
    FromSnapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticKind {
    #[default]
    Smooth,
    TaylorGreenDecay,
    SteadyIdentity,
}

impl From<AnalyticKind> for AnalyticChoice {
    fn from(k: AnalyticKind) -> Self {
        match k {
            AnalyticKind::Smooth => AnalyticChoice::Smooth,
            AnalyticKind::TaylorGreenDecay => AnalyticChoice::TaylorGreenDecay,
            AnalyticKind::SteadyIdentity => AnalyticChoice::SteadyIdentity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub analytic: AnalyticKind,
    pub path: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::TaylorGreen,
            amplitude: 0.1,
            analytic: AnalyticKind::Smooth,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Steps between snapshots; 0 disables them.
    pub snapshot_interval: usize,
    pub diagnostics_interval: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_interval: 0,
            diagnostics_interval: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsSection {
    /// `‖∇u‖_∞` above which a run counts as blown up.
    pub blowup_ceiling: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self { blowup_ceiling: 1e6 }
    }
}

/// A validated configuration turned into solver inputs.
pub struct Prepared {
    pub solver: SolverConfig,
    pub initial: State,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths inside the file are relative to the file
        if let Some(base) = path.parent() {
            if cfg.output.dir.is_relative() {
                cfg.output.dir = base.join(&cfg.output.dir);
            }
            if let Some(p) = cfg.initial.path.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Checks ranges and builds the grid, solver configuration and initial
    /// state.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let usage = |m: String| CliError::Usage(m);
        let grid = GridSpec::new(self.grid.n).map_err(|e| usage(format!("grid: {e}")))?;
        self.certificates.validate().map_err(usage)?;
        if !(self.initial.amplitude.is_finite()) {
            return Err(usage("initial.amplitude must be finite".into()));
        }

        let mut solver = SolverConfig::new(grid.clone());
        solver.nu = self.physics.nu;
        solver.cfl = self.time.cfl;
        solver.t_end = self.time.t_end;
        solver.dt_max = self.time.dt_max;
        solver.snapshot_interval = self.output.snapshot_interval;
        solver.diagnostics_interval = self.output.diagnostics_interval;
        solver.blowup_ceiling = self.limits.blowup_ceiling;
        solver.certificates = self.certificates.clone();

        let initial = match self.initial.kind {
            InitialKind::TaylorGreen => State::new(0.0, taylor_green(&grid), TensorField::identity(&grid))?,
            InitialKind::SteadyIdentity => State::rest(&grid),
            InitialKind::PerturbedIdentity => State::new(
                0.0,
                taylor_green(&grid),
                perturbed_identity(&grid, self.initial.amplitude),
            )?,
            InitialKind::Manufactured => {
                let m = manufactured(&grid, self.physics.nu, self.initial.analytic.into());
                solver.forcing = Some(m.forcing);
                m.initial
            }
            InitialKind::FromSnapshot => {
                let path = self
                    .initial
                    .path
                    .as_ref()
                    .ok_or_else(|| usage("initial.path is required for from-snapshot".into()))?;
                let file = File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
                let state = State::from_snapshot(read_snapshot(BufReader::new(file))?)?;
                if state.grid().n() != grid.n() {
                    return Err(usage(format!(
                        "snapshot grid n = {} differs from grid.n = {}",
                        state.grid().n(),
                        grid.n()
                    )));
                }
                state
            }
        };
        solver.validate().map_err(|e| usage(e.to_string()))?;
        Ok(Prepared { solver, initial })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_fill_in() {
        let cfg = RunConfig::from_toml("[grid]\nn = 32\n[initial]\nkind = \"manufactured\"\n").unwrap();
        assert_eq!(cfg.grid.n, 32);
        assert_eq!(cfg.initial.kind, InitialKind::Manufactured);
        let p = cfg.prepare().unwrap();
        assert!(p.solver.forcing.is_some());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            RunConfig::from_toml("[grid]\nn = 12\n").unwrap().prepare(),
            Err(CliError::Usage(_))
        ));
        assert!(RunConfig::from_toml("[grid]\nsize = 12\n").is_err());
        assert!(RunConfig::from_toml("[initial]\nkind = \"vortex\"\n").is_err());
        let mut cfg = RunConfig::default();
        cfg.certificates.energy_tol = 0.0;
        assert!(cfg.prepare().is_err());
        cfg = RunConfig::default();
        cfg.initial.kind = InitialKind::FromSnapshot;
        assert!(cfg.prepare().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
