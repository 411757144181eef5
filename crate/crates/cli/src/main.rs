use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vspc_cli::commands::{self, ConvergenceMode};
use vspc_cli::{exit, init_threads, CliError};
use vspc_core::diagnostics::CertificateSettings;
use vspc_core::exact::Fidelity;

#[derive(Parser)]
#[command(
    name = "vspc",
    version,
    about = "Spectral solver for viscoelastic flow with regularity diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FidelityArg {
    Corrected,
    Printed,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a TOML config file
    Run { config: PathBuf },
    /// Check the explicit blowup family against its closed forms
    VerifyExact {
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        f0: Option<f64>,
        #[arg(long, value_enum, default_value = "corrected")]
        fidelity: FidelityArg,
    },
    /// Spatial or temporal convergence study
    Convergence {
        #[arg(long)]
        mode: String,
    },
    /// Recompute the blowup monitor and certificates from a diagnostics CSV
    CriterionReport {
        csv: PathBuf,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        energy_tol: Option<f64>,
        #[arg(long)]
        lp_tol: Option<f64>,
    },
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    init_threads()?;
    match cli.command {
        Command::Run { config } => commands::run(&config),
        Command::VerifyExact {
            alpha,
            beta,
            f0,
            fidelity,
        } => {
            let fidelity = match fidelity {
                FidelityArg::Corrected => Fidelity::Corrected,
                FidelityArg::Printed => Fidelity::Printed,
            };
            commands::verify_exact(alpha, beta, f0, fidelity)
        }
        Command::Convergence { mode } => {
            let mode: ConvergenceMode = mode.parse().map_err(CliError::Usage)?;
            commands::convergence(mode)
        }
        Command::CriterionReport {
            csv,
            out,
            energy_tol,
            lp_tol,
        } => {
            let mut settings = CertificateSettings::default();
            if let Some(t) = energy_tol {
                settings.energy_tol = t;
            }
            if let Some(t) = lp_tol {
                settings.lp_tol = t;
            }
            commands::criterion_report(&csv, out.as_deref(), &settings)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
