//! Command-line plumbing for wzlab: flat configuration files, subcommand
//! dispatch, CSV and run.json emission, exit codes.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{ConfigError, RunConfig};
pub use run::{dispatch, CliError, Command, DriverChoice, Outcome, SimulateArgs};

/// Environment variable that overrides `output_dir` from the config.
pub const OUT_DIR_ENV: &str = "WZLAB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "wzlab", version, about = "Wong–Zakai experiments for the quintic stochastic NLS")]
struct Cli {
    /// Flat `key = value` configuration file; defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting applied after the file (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; takes precedence over WZLAB_OUT_DIR and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DriverArg {
    Wz,
    Limit,
    Deterministic,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Solve one path and write trajectory.csv.
    Simulate {
        #[arg(long, value_enum, default_value = "wz")]
        driver: DriverArg,
        /// Partition size for the Wong–Zakai driver.
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Truncation level; `inf` disables it.
        #[arg(long, default_value_t = f64::INFINITY)]
        m: f64,
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
    /// Coupled convergence table against the master-resolution reference.
    Converge,
    /// Moments over the (n, m) grid.
    UniformBounds,
    /// Coupled differences under shrinking perturbations.
    Stability,
    /// Exceedance frequencies against the Chebyshev bound.
    Tails,
    /// The full estimate suite.
    Diagnostics,
    /// Print the resolved configuration in canonical form.
    PrintConfig,
}

fn output_dir(cli_out: Option<PathBuf>, config: Option<&RunConfig>) -> PathBuf {
    cli_out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| RunConfig::default().output_dir)
}

fn report_failure(dir: &std::path::Path, record: &serde_json::Value) {
    eprintln!("{record}");
    if let Err(e) = run::write_failure(dir, record) {
        eprintln!("wzlab: {e}");
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command = match cli.command {
        Sub::Simulate { driver, n, m, path } => Command::Simulate(SimulateArgs {
            driver: match driver {
                DriverArg::Wz => DriverChoice::WongZakai,
                DriverArg::Limit => DriverChoice::Limit,
                DriverArg::Deterministic => DriverChoice::Deterministic,
            },
            n,
            m,
            path,
        }),
        Sub::Converge => Command::Converge,
        Sub::UniformBounds => Command::UniformBounds,
        Sub::Stability => Command::Stability,
        Sub::Tails => Command::Tails,
        Sub::Diagnostics => Command::Diagnostics,
        Sub::PrintConfig => {
            return match RunConfig::load(cli.config.as_deref(), &cli.set) {
                Ok(config) => {
                    print!("{}", config.to_flat());
                    0
                }
                Err(e) => {
                    eprintln!("wzlab: {e}");
                    2
                }
            };
        }
    };
    let config = match RunConfig::load(cli.config.as_deref(), &cli.set) {
        Ok(c) => c,
        Err(e) => {
            let err = CliError::Config(e);
            let dir = output_dir(cli.out, None);
            report_failure(&dir, &run::failure_record(Some(command.name()), Some(&err), &[]));
            return err.exit_code();
        }
    };
    let dir = output_dir(cli.out, Some(&config));
    match dispatch(&command, &config, &dir) {
        Ok(outcome) if outcome.passed() => {
            for a in &outcome.artifacts {
                println!("{}", a.display());
            }
            0
        }
        Ok(outcome) => {
            report_failure(&dir, &run::failure_record(Some(command.name()), None, &outcome.failures));
            1
        }
        Err(err) => {
            report_failure(&dir, &run::failure_record(Some(command.name()), Some(&err), &[]));
            err.exit_code()
        }
    }
}
