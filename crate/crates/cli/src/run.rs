//! Subcommand execution, artifact emission and failure records.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;
use wzlab_core::diagnostics::{run_estimate_suite, DiagnosticsError, EstimateReport};
use wzlab_core::dynamics::{evolve, DynamicsError, Records, SolverSpec, TruncationSpec};
use wzlab_core::experiments::{
    fmt_float, run_convergence, run_stability, run_tail_estimate, run_uniform_bounds, ExperimentError,
};
use wzlab_core::noise::{BrownianEnsemble, NoiseError, Partition};

use crate::config::{ConfigError, RunConfig};

/// Mass drift allowed in a conservative solve.
const MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            _ => "runtime",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverChoice {
    WongZakai,
    Limit,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateArgs {
    pub driver: DriverChoice,
    /// Partition size for the Wong–Zakai driver.
    pub n: usize,
    pub m: f64,
    pub path: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate(SimulateArgs),
    Converge,
    UniformBounds,
    Stability,
    Tails,
    Diagnostics,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Converge => "converge",
            Command::UniformBounds => "uniform-bounds",
            Command::Stability => "stability",
            Command::Tails => "tails",
            Command::Diagnostics => "diagnostics",
        }
    }
}

/// Files written and internal assertions that failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_with<F>(outcome: &mut Outcome, dir: &Path, name: &str, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let mut out = create(&path)?;
    body(&mut out).and_then(|_| out.flush()).map_err(io_at(&path))?;
    outcome.artifacts.push(path);
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    fs::write(path, text + "\n").map_err(io_at(path))
}

fn sidecar(command: &Command, config: &RunConfig, status: &str, outcome: &Outcome, dir: &Path) -> serde_json::Value {
    let artifacts: Vec<String> = outcome
        .artifacts
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
        .collect();
    json!({
        "subcommand": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "fingerprint": config.fingerprint(),
        "seed": config.experiment.seed,
        "diagnostics_seed": config.diagnostics.seed,
        "status": status,
        "artifacts": artifacts,
        "failures": outcome.failures,
        "config": config.to_flat(),
    })
}

/// Runs `command`, writing run.json before any work starts and again with
/// the outcome.
pub fn dispatch(command: &Command, config: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let run_json = dir.join("run.json");
    write_json(&run_json, &sidecar(command, config, "running", &Outcome::default(), dir))?;
    let mut outcome = Outcome::default();
    match command {
        Command::Simulate(args) => simulate(args, config, dir, &mut outcome)?,
        Command::Converge => converge(config, dir, &mut outcome)?,
        Command::UniformBounds => uniform(config, dir, &mut outcome)?,
        Command::Stability => stability(config, dir, &mut outcome)?,
        Command::Tails => tails(config, dir, &mut outcome)?,
        Command::Diagnostics => diagnostics(config, dir, &mut outcome)?,
    }
    let status = if outcome.passed() { "passed" } else { "failed" };
    write_json(&run_json, &sidecar(command, config, status, &outcome, dir))?;
    Ok(outcome)
}

/// Machine-readable record of a run that did not pass.
pub fn failure_record(command: Option<&str>, error: Option<&CliError>, failures: &[String]) -> serde_json::Value {
    match error {
        Some(e) => json!({
            "subcommand": command,
            "kind": e.kind(),
            "exit_code": e.exit_code(),
            "message": e.to_string(),
            "location": match e {
                CliError::Config(c) => c.location().map(str::to_string),
                _ => None,
            },
        }),
        None => json!({
            "subcommand": command,
            "kind": "assertion",
            "exit_code": 1,
            "failures": failures,
        }),
    }
}

pub fn write_failure(dir: &Path, record: &serde_json::Value) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    write_json(&dir.join("failure.json"), record)
}

fn simulate(args: &SimulateArgs, config: &RunConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let exp = &config.experiment;
    let setup = exp.validate()?;
    let driver = match args.driver {
        DriverChoice::WongZakai => SolverSpec::wong_zakai(Partition::uniform(args.n, exp.master_steps)?),
        DriverChoice::Limit => SolverSpec::limit(),
        DriverChoice::Deterministic => SolverSpec::deterministic(),
    };
    let spec = driver
        .with_truncation(TruncationSpec::at(args.m)?)
        .with_substeps(exp.substeps)
        .with_records(Records::Uniform(exp.records))
        .with_ceiling(exp.ceiling);
    let ensemble = BrownianEnsemble::generate(setup.model.num_modes(), exp.master_steps, exp.seed, args.path)?;
    let initial = exp.initial.sample(&setup.grid, exp.seed, args.path);
    let traj = evolve(&initial, &setup.model, &ensemble, &spec)?;
    write_with(outcome, dir, "trajectory.csv", |out| {
        writeln!(out, "t,mass,x2_running,l2_norm,l10_norm")?;
        for (i, field) in traj.fields().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt_float(traj.times()[i]),
                fmt_float(traj.mass_series()[i]),
                fmt_float(traj.running_x2()[i]),
                fmt_float(field.lp_norm(2.0).expect("valid exponent")),
                fmt_float(field.lp_norm(10.0).expect("valid exponent")),
            )?;
        }
        Ok(())
    })?;
    let drift = traj.max_relative_mass_drift();
    if !(drift <= MASS_TOLERANCE) {
        outcome
            .failures
            .push(format!("relative mass drift {drift:e} exceeds {MASS_TOLERANCE:e}"));
    }
    Ok(())
}

fn converge(config: &RunConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let mut table = run_convergence(&config.experiment)?;
    table.fingerprint = config.fingerprint();
    write_with(outcome, dir, "converge.csv", |out| table.write_csv(out))?;
    for row in table.rows.iter().chain(&table.reference_rows) {
        if row.estimates.iter().any(|e| !e.mean.is_finite()) {
            outcome.failures.push(format!("n = {}: non-finite moment", row.n));
        }
    }
    if let Some(row) = table
        .reference_rows
        .iter()
        .find(|r| r.n == table.reference_steps)
    {
        if row.estimates.iter().any(|e| e.mean != 0.0) {
            outcome
                .failures
                .push(format!("n = Q = {} row is not exactly zero", row.n));
        }
    }
    Ok(())
}

fn uniform(config: &RunConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let table = run_uniform_bounds(&config.experiment)?;
    write_with(outcome, dir, "uniform.csv", |out| table.write_csv(out))?;
    for cell in &table.cells {
        if !(cell.x1_deviation <= 1e-8) {
            outcome.failures.push(format!(
                "n = {}, m = {}: X1 component deviates from the data norm by {:e}",
                cell.n,
                fmt_float(cell.m),
                cell.x1_deviation
            ));
        }
    }
    Ok(())
}

fn stability(config: &RunConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let table = run_stability(&config.experiment)?;
    write_with(outcome, dir, "stability.csv", |out| table.write_csv(out))?;
    for row in table.rows.iter().filter(|r| r.delta == 0.0) {
        if row.estimates.iter().any(|e| e.mean != 0.0) {
            outcome
                .failures
                .push("delta = 0 difference is not exactly zero".into());
        }
    }
    Ok(())
}

fn tails(config: &RunConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let table = run_tail_estimate(&config.experiment)?;
    write_with(outcome, dir, "tails.csv", |out| table.write_csv(out))?;
    for row in table.rows.iter().filter(|r| !r.within_bound()) {
        outcome.failures.push(format!(
            "K = {}: empirical frequency {} above the Chebyshev bound {}",
            fmt_float(row.level),
            fmt_float(row.empirical_freq),
            fmt_float(row.chebyshev_bound)
        ));
    }
    Ok(())
}

fn diagnostics(config: &RunConfig, dir: &Path, outcome: &mut Outcome) -> Result<(), CliError> {
    let reports = run_estimate_suite(&config.diagnostics)?;
    write_with(outcome, dir, "diagnostics.csv", |out| {
        writeln!(out, "{}", EstimateReport::csv_header())?;
        reports.iter().try_for_each(|r| r.write_csv_rows(&mut *out))
    })?;
    let mut names: Vec<&str> = Vec::new();
    for r in &reports {
        if !names.contains(&r.name.as_str()) {
            names.push(&r.name);
        }
    }
    for name in names {
        write_with(outcome, dir, &format!("diag_{name}.csv"), |out| {
            writeln!(out, "{}", EstimateReport::csv_header())?;
            reports
                .iter()
                .filter(|r| r.name == name)
                .try_for_each(|r| r.write_csv_rows(&mut *out))
        })?;
    }
    for r in reports.iter().filter(|r| !r.pass) {
        outcome.failures.push(format!(
            "{} ({}): worst ratio {} above ceiling {}",
            r.name,
            r.param,
            fmt_float(r.worst_ratio),
            fmt_float(r.ceiling)
        ));
    }
    Ok(())
}
