use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsdde_cli::commands::{self, CliError, CliResult, EpsilonChoice, VerifyOptions};
use fsdde_cli::config::LoadedConfig;

/// Thread count override for path simulation.
const THREADS_ENV: &str = "FSDDE_THREADS";

#[derive(Parser)]
#[command(
    name = "fsdde",
    version,
    about = "Fractional stochastic neutral delay equations: simulation and stability certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the Mittag-Leffler function E_{alpha,beta}(z).
    Mlf {
        alpha: f64,
        beta: f64,
        #[arg(allow_hyphen_values = true)]
        z: f64,
    },
    /// Evaluate the delayed Mittag-Leffler matrix function of a config's system.
    Dml {
        config: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long)]
        t: f64,
    },
    /// Simulate paths and write the moment table.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compute the assumption constants, K and the stability certificate.
    Certify {
        config: PathBuf,
        /// Overrides the config's epsilon.
        #[arg(long, conflicts_with = "epsilon_multiple")]
        epsilon: Option<f64>,
        /// Sets epsilon to this multiple of the Lambda-collapse scale.
        #[arg(long)]
        epsilon_multiple: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the identity, Gronwall and Jensen verification sweeps.
    Verify {
        /// Include lambda = (p-1)/p, reported as skipped.
        #[arg(long)]
        include_boundary: bool,
        /// Corrupt the Mittag-Leffler side of each identity (self-test).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Tabulate K against gamma.
    SweepGamma {
        config: PathBuf,
        /// Comma-separated gamma values.
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a shipped example end to end.
    Reproduce {
        example: String,
        /// Defaults to out/<example>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = THREADS_ENV;
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Mlf { alpha, beta, z } => print!("{}", commands::mlf(alpha, beta, z)?),
        Command::Dml { config, nu, t } => print!("{}", commands::dml(&LoadedConfig::read(&config)?, nu, t)?),
        Command::Simulate { config, out } => print!("{}", commands::simulate(&LoadedConfig::read(&config)?, &out)?),
        Command::Certify { config, epsilon, epsilon_multiple, out } => {
            let choice = epsilon.map(EpsilonChoice::Value).or(epsilon_multiple.map(EpsilonChoice::Multiple));
            print!("{}", commands::certify(&LoadedConfig::read(&config)?, choice, &out)?)
        }
        Command::Verify { include_boundary, inject_fault } => {
            let (report, failures) = commands::verify(VerifyOptions { include_boundary, inject_fault })?;
            print!("{report}");
            if failures > 0 {
                return Err(CliError::VerifyFailed(failures));
            }
        }
        Command::SweepGamma { config, gammas, output } => {
            let csv = commands::sweep_gamma(&LoadedConfig::read(&config)?, &gammas)?;
            match output {
                Some(p) => std::fs::write(p, csv)?,
                None => print!("{}", String::from_utf8_lossy(&csv)),
            }
        }
        Command::Reproduce { example, out } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&example));
            print!("{}", commands::reproduce(&example, &dir)?)
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    configure_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
