use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use vspc_core::diagnostics::{
    all_certificates, bkm_report, read_csv, write_csv, BkmReport, CertificateReport, CertificateSettings,
    DiagnosticsRecord,
};
use vspc_core::exact::{Fidelity, ZghParams};
use vspc_core::solver::{simulate_with, RunObserver, State, Termination};

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::verify::{
    exact_sweep, spatial_study, temporal_study, ExactOptions, SPATIAL_NS, SPATIAL_RATIO_THRESHOLD, TEMPORAL_DTS,
    TEMPORAL_ORDER_RANGE,
};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Writes snapshots as the run produces them and remembers the first
/// write error.
struct SnapshotWriter {
    dir: PathBuf,
    count: usize,
    error: Option<CliError>,
}

impl RunObserver for SnapshotWriter {
    fn on_snapshot(&mut self, state: &State) {
        if self.error.is_some() {
            return;
        }
        let path = self.dir.join(format!("snapshot_{:06}.bin", self.count));
        self.count += 1;
        let result = File::create(&path).map_err(CliError::from).and_then(|f| {
            let mut w = BufWriter::new(f);
            state.write_snapshot(&mut w)?;
            w.flush()?;
            Ok(())
        });
        if let Err(e) = result {
            self.error = Some(e);
        }
    }
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    version: &'static str,
    config: &'a RunConfig,
    threads: usize,
    steps: usize,
    final_time: f64,
    termination: &'a Termination,
    snapshots: usize,
}

#[derive(Debug, Serialize)]
pub struct CriterionReport {
    pub records: usize,
    pub bkm: BkmReport,
    pub certificates: Vec<CertificateReport>,
}

pub fn criterion_report_for(history: &[DiagnosticsRecord], settings: &CertificateSettings) -> CriterionReport {
    CriterionReport {
        records: history.len(),
        bkm: bkm_report(history),
        certificates: all_certificates(history, settings),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `run <config>`
pub fn run(config_path: &Path) -> Result<u8, CliError> {
    let cfg = RunConfig::load(config_path)?;
    run_config(&cfg)
}

pub fn run_config(cfg: &RunConfig) -> Result<u8, CliError> {
    let prepared = cfg.prepare()?;
    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let snap_dir = out_dir.join(SNAPSHOT_DIR);
    if cfg.output.snapshot_interval > 0 {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut writer = SnapshotWriter {
        dir: snap_dir,
        count: 0,
        error: None,
    };
    let result = simulate_with(&prepared.solver, prepared.initial, &mut writer)?;
    if let Some(e) = writer.error {
        return Err(e);
    }

    write_csv(
        BufWriter::new(File::create(out_dir.join(DIAGNOSTICS_FILE))?),
        &result.history,
    )?;
    let report = criterion_report_for(&result.history, &cfg.certificates);
    write_json(&out_dir.join(CERTIFICATES_FILE), &report)?;
    write_json(
        &out_dir.join(METADATA_FILE),
        &Metadata {
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            threads: rayon::current_num_threads(),
            steps: result.steps,
            final_time: result.final_state.t,
            termination: &result.termination,
            snapshots: writer.count,
        },
    )?;

    for c in &report.certificates {
        let verdict = match (c.applicable, c.satisfied) {
            (false, _) => "n/a",
            (true, true) => "ok",
            (true, false) => "VIOLATED",
        };
        println!(
            "{:<16} {:>9} value {:.3e} margin {:.3e}",
            c.name, verdict, c.value, c.margin
        );
    }
    println!(
        "bkm integral {:.6e}, {} steps to t = {}",
        report.bkm.integral, result.steps, result.final_state.t
    );
    Ok(match &result.termination {
        Termination::Completed => exit::OK,
        Termination::BlowupDetected { t } => {
            eprintln!("blowup detected at t = {t}");
            exit::BLOWUP
        }
        Termination::CertificateViolationHalt { certificate, t } => {
            eprintln!("certificate {certificate} violated at t = {t}; run halted");
            exit::CHECK_FAILED
        }
    })
}

/// `verify-exact`
pub fn verify_exact(
    alpha: Option<f64>,
    beta: Option<f64>,
    f0: Option<f64>,
    fidelity: Fidelity,
) -> Result<u8, CliError> {
    let params = match (alpha, beta, f0) {
        (None, None, None) => None,
        (a, b, f) => Some(
            ZghParams::new(a.unwrap_or(2.0), b.unwrap_or(1.0), f.unwrap_or(1.0))
                .map_err(|e| CliError::Usage(e.to_string()))?,
        ),
    };
    let checks = exact_sweep(&ExactOptions {
        params,
        fidelity,
        ..Default::default()
    })?;
    println!("{:<30} {:>12} {:>10}  result", "check", "value", "tolerance");
    let mut ok = true;
    for c in &checks {
        let verdict = match (c.expected_fail, c.passed) {
            (false, true) => "pass",
            (false, false) => "FAIL",
            (true, true) => "expected-fail",
            (true, false) => "FAIL (expected a failure)",
        };
        println!("{:<30} {:>12.3e} {:>10.1e}  {verdict}", c.name, c.value, c.tolerance);
        ok &= c.passed;
    }
    Ok(if ok { exit::OK } else { exit::CHECK_FAILED })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMode {
    Spatial,
    Temporal,
}

impl std::str::FromStr for ConvergenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spatial" => Ok(Self::Spatial),
            "temporal" => Ok(Self::Temporal),
            other => Err(format!("unknown mode {other:?} (expected spatial or temporal)")),
        }
    }
}

/// `convergence --mode <spatial|temporal>`
pub fn convergence(mode: ConvergenceMode) -> Result<u8, CliError> {
    let ok = match mode {
        ConvergenceMode::Temporal => {
            let s = temporal_study(&TEMPORAL_DTS);
            println!("{:>10} {:>12}", "dt", "error");
            for (dt, e) in s.dts.iter().zip(&s.errors) {
                println!("{dt:>10.1e} {e:>12.3e}");
            }
            for o in &s.orders {
                println!("observed order (Richardson) {o:.3}");
            }
            let against: Vec<String> = s.oracle_orders.iter().map(|o| format!("{o:.3}")).collect();
            println!("orders against the exact exponential: {}", against.join(", "));
            let (lo, hi) = TEMPORAL_ORDER_RANGE;
            s.orders.iter().all(|o| (lo..=hi).contains(o))
        }
        ConvergenceMode::Spatial => {
            let s = spatial_study(&SPATIAL_NS, 0.01, 0.5, 0.005)?;
            println!("{:>6} {:>12} {:>12}", "n", "error", "ratio");
            for (i, (n, e)) in s.ns.iter().zip(&s.errors).enumerate() {
                let ratio = if i == 0 {
                    String::from("-")
                } else {
                    format!("{:.3e}", s.ratios[i - 1])
                };
                println!("{n:>6} {e:>12.3e} {ratio:>12}");
            }
            s.ratios[0] >= SPATIAL_RATIO_THRESHOLD
        }
    };
    Ok(if ok { exit::OK } else { exit::CHECK_FAILED })
}

/// `criterion-report <csv>`
pub fn criterion_report(csv: &Path, out: Option<&Path>, settings: &CertificateSettings) -> Result<u8, CliError> {
    settings.validate().map_err(CliError::Usage)?;
    let file = File::open(csv).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", csv.display())))?;
    let history = read_csv(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", csv.display())))?;
    let report = criterion_report_for(&history, settings);
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(exit::OK)
}
