//! Time integration of the divergence-free Oldroyd system
//!
//! ```text
//! ∂t u − νΔu + u·∇u + ∇p = F_{·i}·∇F_{·i} + g_u
//! ∂t F_{·k} + u·∇F_{·k}  = F_{·k}·∇u + g_{F,k}
//! div u = 0,  div F_{·k} = 0
//! ```
//!
//! Pressure is eliminated by the Leray projector. Viscosity is integrated
//! exactly through the factor `e^{−ν|k|²τ}` inside a classical RK4 step
//! (Lawson's integrating-factor scheme); the deformation equation has no
//! linear part. After each step both `u` and the columns of `F` are
//! projected back onto divergence-free fields.

mod initial;

pub use initial::{perpendicular_gradient, perturbed_identity, taylor_green};

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, CertificateSettings, DiagnosticsRecord, Prior};
use crate::fields::{check_grid, dealias_in_place, FieldError, GridSpec, ScalarField, TensorField, VectorField};
use crate::snapshot::{self, Snapshot, SnapshotError};
use crate::spectral::{deriv_coeffs, divergence, leray_in_place};

/// Divergence tolerance (max-norm) for states handed to the solver.
pub const STATE_DIVERGENCE_TOLERANCE: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const CFL_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("state violates incompressibility: max divergence {defect:e}")]
    ConstraintViolation { defect: f64 },
    #[error("blowup detected at t = {t}")]
    Blowup {
        t: f64,
        record: Option<Box<DiagnosticsRecord>>,
    },
}

/// Velocity and deformation tensor at time `t`.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: VectorField,
    pub f: TensorField,
}

impl State {
    pub fn new(t: f64, u: VectorField, f: TensorField) -> Result<Self, FieldError> {
        check_grid(u.grid(), f.grid())?;
        Ok(Self { t, u, f })
    }

    /// `u = 0`, `F = I`: a steady state of the unforced system.
    pub fn rest(grid: &GridSpec) -> Self {
        Self {
            t: 0.0,
            u: VectorField::zeros(grid),
            f: TensorField::identity(grid),
        }
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self {
            t: 0.0,
            u: VectorField::zeros(grid),
            f: TensorField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u.grid()
    }

    /// The six scalar fields in snapshot order: `u₁, u₂, F₁₁, F₂₁, F₁₂, F₂₂`.
    pub fn scalar_fields(&self) -> [&ScalarField; 6] {
        [
            self.u.component(0),
            self.u.component(1),
            self.f.entry(0, 0),
            self.f.entry(1, 0),
            self.f.entry(0, 1),
            self.f.entry(1, 1),
        ]
    }

    /// Max-norm divergence of `u`, `F_{·1}` and `F_{·2}`.
    pub fn divergence_defects(&self) -> [f64; 3] {
        [
            divergence(&self.u).max_abs(),
            divergence(self.f.column(0)).max_abs(),
            divergence(self.f.column(1)).max_abs(),
        ]
    }

    pub fn write_snapshot<W: std::io::Write>(&self, out: W) -> Result<(), SnapshotError> {
        let fields: Vec<ScalarField> = self.scalar_fields().into_iter().cloned().collect();
        snapshot::write_snapshot(out, self.t, &fields)
    }

    pub fn from_snapshot(snap: Snapshot) -> Result<Self, SnapshotError> {
        if snap.fields.len() != 6 {
            return Err(SnapshotError::FieldCount {
                expected: 6,
                found: snap.fields.len(),
            });
        }
        let mut it = snap.fields.into_iter();
        let mut next = || it.next().unwrap();
        let u = VectorField::new(next(), next())?;
        let c1 = VectorField::new(next(), next())?;
        let c2 = VectorField::new(next(), next())?;
        Ok(Self::new(snap.time, u, TensorField::new(c1, c2)?)?)
    }

    fn pack(&self) -> Packed {
        Packed {
            c: self.scalar_fields().map(|f| f.spectral().into_owned()),
        }
    }

    fn unpack(grid: &GridSpec, t: f64, p: Packed) -> Self {
        let [a, b, c, d, e, f] = p.c.map(|c| ScalarField::from_spectral(grid, c).unwrap());
        Self {
            t,
            u: VectorField::new(a, b).unwrap(),
            f: TensorField::new(VectorField::new(c, d).unwrap(), VectorField::new(e, f).unwrap()).unwrap(),
        }
    }
}

/// Time derivative of a [`State`], spectral representation.
#[derive(Debug, Clone)]
pub struct StateDerivative {
    pub du: VectorField,
    pub df: TensorField,
}

pub type VectorSource = Arc<dyn Fn(f64) -> VectorField + Send + Sync>;
pub type TensorSource = Arc<dyn Fn(f64) -> TensorField + Send + Sync>;

/// Time-dependent body forces for the momentum and deformation equations.
#[derive(Clone)]
pub struct ForcingSpec {
    pub g_u: VectorSource,
    pub g_f: TensorSource,
}

impl fmt::Debug for ForcingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ForcingSpec { .. }")
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub nu: f64,
    pub grid: GridSpec,
    pub cfl: f64,
    pub t_end: f64,
    pub dt_max: f64,
    pub forcing: Option<ForcingSpec>,
    /// Steps between snapshots; 0 disables them.
    pub snapshot_interval: usize,
    /// Steps between emitted diagnostics records (at least 1).
    pub diagnostics_interval: usize,
    /// `‖∇u‖_∞` above which the run is declared blown up.
    pub blowup_ceiling: f64,
    pub certificates: CertificateSettings,
}

impl SolverConfig {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            nu: 0.0,
            grid,
            cfl: 0.5,
            t_end: 1.0,
            dt_max: 0.01,
            forcing: None,
            snapshot_interval: 0,
            diagnostics_interval: 1,
            blowup_ceiling: 1e6,
            certificates: CertificateSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be >= 0, got {}", self.nu));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad(format!("dt_max must be > 0, got {}", self.dt_max));
        }
        if self.diagnostics_interval == 0 {
            return bad("diagnostics_interval must be >= 1".into());
        }
        if !(self.blowup_ceiling > 0.0) {
            return bad(format!("blowup_ceiling must be > 0, got {}", self.blowup_ceiling));
        }
        self.certificates.validate().map_err(SolverError::InvalidConfig)
    }
}

/// Spectral coefficients of `u₁, u₂, F₁₁, F₂₁, F₁₂, F₂₂`.
#[derive(Clone)]
struct Packed {
    c: [Vec<Complex64>; 6],
}

impl Packed {
    fn zeros_like(&self) -> Self {
        Packed {
            c: std::array::from_fn(|_| vec![ZERO; self.c[0].len()]),
        }
    }

    fn all_finite(&self) -> bool {
        self.c
            .iter()
            .all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }
}

// Index of F_{row,col} inside Packed.
const fn fi(row: usize, col: usize) -> usize {
    2 + 2 * col + row
}

/// Nonlinear and forcing part of the right-hand side; viscosity excluded.
fn nonlinear(grid: &GridSpec, t: f64, y: &Packed, forcing: Option<&ForcingSpec>) -> Packed {
    let len = grid.len();
    let mut dealiased = y.clone();
    for c in dealiased.c.iter_mut() {
        dealias_in_place(grid, c);
    }
    let phys: Vec<Vec<f64>> = dealiased.c.iter().map(|c| grid.inverse_real(c)).collect();
    // grad[q][l] = ∂_l of field q, physical
    let grad: Vec<[Vec<f64>; 2]> = dealiased
        .c
        .iter()
        .map(|c| [0, 1].map(|l| grid.inverse_real(&deriv_coeffs(grid, c, l))))
        .collect();

    let mut out = [(); 6].map(|_| vec![0.0; len]);
    for p in 0..len {
        let u = [phys[0][p], phys[1][p]];
        for j in 0..2 {
            // −u·∇u + F_{·i}·∇F_{·i}
            let mut acc = -(u[0] * grad[j][0][p] + u[1] * grad[j][1][p]);
            for i in 0..2 {
                let col = [phys[fi(0, i)][p], phys[fi(1, i)][p]];
                let g = &grad[fi(j, i)];
                acc += col[0] * g[0][p] + col[1] * g[1][p];
            }
            out[j][p] = acc;
        }
        for k in 0..2 {
            let col = [phys[fi(0, k)][p], phys[fi(1, k)][p]];
            for j in 0..2 {
                // −u·∇F_{jk} + F_{·k}·∇u_j
                let gf = &grad[fi(j, k)];
                out[fi(j, k)][p] =
                    -(u[0] * gf[0][p] + u[1] * gf[1][p]) + col[0] * grad[j][0][p] + col[1] * grad[j][1][p];
            }
        }
    }

    let mut result = Packed {
        c: out.map(|v| {
            let mut c = grid.forward(&v);
            dealias_in_place(grid, &mut c);
            c
        }),
    };
    if let Some(forcing) = forcing {
        let gu = (forcing.g_u)(t);
        let gf = (forcing.g_f)(t);
        let sources = [
            gu.component(0),
            gu.component(1),
            gf.entry(0, 0),
            gf.entry(1, 0),
            gf.entry(0, 1),
            gf.entry(1, 1),
        ];
        for (dst, src) in result.c.iter_mut().zip(sources) {
            for (a, b) in dst.iter_mut().zip(src.spectral().iter()) {
                *a += b;
            }
        }
    }
    let [u1, u2, ..] = &mut result.c;
    leray_in_place(grid, u1, u2);
    result
}

/// Full time derivative `(du/dt, dF/dt)` of `state`.
pub fn rhs(state: &State, cfg: &SolverConfig) -> Result<StateDerivative, SolverError> {
    let grid = state.grid();
    check_grid(grid, &cfg.grid)?;
    let y = state.pack();
    let mut d = nonlinear(grid, state.t, &y, cfg.forcing.as_ref());
    for q in 0..2 {
        for (idx, z) in d.c[q].iter_mut().enumerate() {
            *z -= cfg.nu * grid.k_squared(idx) * y.c[q][idx];
        }
    }
    if !d.all_finite() {
        return Err(SolverError::Blowup {
            t: state.t,
            record: None,
        });
    }
    let s = State::unpack(grid, state.t, d);
    Ok(StateDerivative { du: s.u, df: s.f })
}

/// Squared L² norms of what the post-step projection removed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProjectionDefect {
    pub u: f64,
    pub f: f64,
}

/// Advances `state` by `dt`.
pub fn step(state: &State, dt: f64, cfg: &SolverConfig) -> Result<State, SolverError> {
    step_with_defect(state, dt, cfg).map(|(s, _)| s)
}

pub fn step_with_defect(state: &State, dt: f64, cfg: &SolverConfig) -> Result<(State, ProjectionDefect), SolverError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    let grid = state.grid();
    check_grid(grid, &cfg.grid)?;
    let forcing = cfg.forcing.as_ref();
    let (t, h) = (state.t, dt);
    let y = state.pack();

    // Integrating factors for the two velocity components; F has none.
    let e_half: Vec<f64> = (0..grid.len())
        .map(|idx| (-cfg.nu * grid.k_squared(idx) * 0.5 * h).exp())
        .collect();
    let e_full: Vec<f64> = e_half.iter().map(|e| e * e).collect();
    let factor = |q: usize, e: &[f64], idx: usize| if q < 2 { e[idx] } else { 1.0 };

    let combine = |f: &dyn Fn(usize, usize) -> Complex64| {
        let mut out = y.zeros_like();
        for q in 0..6 {
            for idx in 0..grid.len() {
                out.c[q][idx] = f(q, idx);
            }
        }
        out
    };

    let k1 = nonlinear(grid, t, &y, forcing);
    let y2 = combine(&|q, i| factor(q, &e_half, i) * (y.c[q][i] + 0.5 * h * k1.c[q][i]));
    let k2 = nonlinear(grid, t + 0.5 * h, &y2, forcing);
    let y3 = combine(&|q, i| factor(q, &e_half, i) * y.c[q][i] + 0.5 * h * k2.c[q][i]);
    let k3 = nonlinear(grid, t + 0.5 * h, &y3, forcing);
    let y4 = combine(&|q, i| factor(q, &e_full, i) * y.c[q][i] + h * factor(q, &e_half, i) * k3.c[q][i]);
    let k4 = nonlinear(grid, t + h, &y4, forcing);
    let mut next = combine(&|q, i| {
        factor(q, &e_full, i) * y.c[q][i]
            + h / 6.0
                * (factor(q, &e_full, i) * k1.c[q][i]
                    + 2.0 * factor(q, &e_half, i) * (k2.c[q][i] + k3.c[q][i])
                    + k4.c[q][i])
    });

    if !next.all_finite() {
        return Err(SolverError::Blowup { t: t + h, record: None });
    }
    let [u1, u2, f11, f21, f12, f22] = &mut next.c;
    let defect = ProjectionDefect {
        u: leray_in_place(grid, u1, u2),
        f: leray_in_place(grid, f11, f21) + leray_in_place(grid, f12, f22),
    };
    Ok((State::unpack(grid, t + h, next), defect))
}

/// `min(dt_max, cfl·Δx / (‖u‖_∞ + ‖F‖_∞ + ε))` with pointwise Euclidean and
/// Frobenius magnitudes.
pub fn adaptive_dt(state: &State, cfg: &SolverConfig) -> Result<f64, SolverError> {
    let speed = state.u.max_abs()? + state.f.max_abs()?;
    Ok(cfg.dt_max.min(cfg.cfl * state.grid().dx() / (speed + CFL_EPSILON)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    BlowupDetected { t: f64 },
    CertificateViolationHalt { certificate: String, t: f64 },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: State,
    pub history: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    pub steps: usize,
}

/// Receives records and snapshots while a run progresses.
pub trait RunObserver {
    fn on_record(&mut self, _record: &DiagnosticsRecord) {}
    fn on_snapshot(&mut self, _state: &State) {}
}

struct Silent;
impl RunObserver for Silent {}

pub fn simulate(cfg: &SolverConfig, initial: State) -> Result<RunResult, SolverError> {
    simulate_with(cfg, initial, &mut Silent)
}

pub fn simulate_with(
    cfg: &SolverConfig,
    initial: State,
    observer: &mut dyn RunObserver,
) -> Result<RunResult, SolverError> {
    cfg.validate()?;
    check_grid(initial.grid(), &cfg.grid)?;
    let defect = initial.divergence_defects().into_iter().fold(0.0, f64::max);
    if defect > STATE_DIVERGENCE_TOLERANCE {
        return Err(SolverError::ConstraintViolation { defect });
    }
    let forced = cfg.forcing.is_some();

    let mut state = initial;
    let mut last = diagnostics::record(&state, None, cfg.nu, forced);
    let mut history = vec![last.clone()];
    observer.on_record(&last);
    if cfg.snapshot_interval > 0 {
        observer.on_snapshot(&state);
    }

    let mut steps = 0usize;
    let mut termination = Termination::Completed;
    let mut emitted_last = true;
    let mut snapped_last = cfg.snapshot_interval > 0;
    while cfg.t_end - state.t > 1e-12 * cfg.t_end.max(1.0) {
        let dt = adaptive_dt(&state, cfg)?.min(cfg.t_end - state.t);
        let (next, proj) = match step_with_defect(&state, dt, cfg) {
            Ok(ok) => ok,
            Err(SolverError::Blowup { t, .. }) => {
                termination = Termination::BlowupDetected { t };
                break;
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        let prior = Prior {
            record: &last,
            velocity: Some(&state.u),
        };
        let mut rec = diagnostics::record(&next, Some(prior), cfg.nu, forced);
        rec.projection_u = proj.u.sqrt();
        rec.projection_f = proj.f.sqrt();
        state = next;
        last = rec;

        let blown = !last.linf_gradu.is_finite() || last.linf_gradu > cfg.blowup_ceiling;
        emitted_last = steps.is_multiple_of(cfg.diagnostics_interval) || blown;
        if emitted_last {
            history.push(last.clone());
            observer.on_record(&last);
        }
        snapped_last = cfg.snapshot_interval > 0 && steps.is_multiple_of(cfg.snapshot_interval);
        if snapped_last {
            observer.on_snapshot(&state);
        }
        if blown {
            termination = Termination::BlowupDetected { t: state.t };
            break;
        }
        if cfg.certificates.strict {
            if let Some(name) = diagnostics::violated_certificate(&history, &cfg.certificates) {
                termination = Termination::CertificateViolationHalt {
                    certificate: name,
                    t: state.t,
                };
                break;
            }
        }
    }
    if !emitted_last {
        history.push(last.clone());
        observer.on_record(&last);
    }
    if cfg.snapshot_interval > 0 && !snapped_last {
        observer.on_snapshot(&state);
    }
    Ok(RunResult {
        final_state: state,
        history,
        termination,
        steps,
    })
}
