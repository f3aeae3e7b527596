//! Monte Carlo orchestration: Wong–Zakai convergence against the master
//! resolution solve, uniform 𝒳 bounds over (n, m), stability under
//! perturbation of data and noise, and Chebyshev tails.
//!
//! Every path p draws its Brownian increments and initial data from
//! substreams keyed by (seed, p), so a path's output does not depend on which
//! other paths or which other n are run. Paths are evaluated in parallel and
//! reduced sequentially in path order, so tables are identical for any worker
//! count.

use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{evolve, DynamicsError, InitialData, Records, SolverSpec, TruncationSpec};
use crate::grid::{ComplexField, GridError, RealField, SpatialGrid};
use crate::noise::{build_standard_noise, BrownianEnsemble, ModeDescriptor, NoiseError, NoiseModel, Partition};
use crate::spacetime::{difference_norms, x_norms, SpacetimeError, TimeInterval};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("path {path} (seed {seed}) failed: {source}")]
    PathFailed {
        path: u64,
        seed: u64,
        #[source]
        source: DynamicsError,
    },
    #[error("need at least one sample for a moment estimate")]
    NoSamples,
    #[error("moment order must be >= 1, got {0}")]
    InvalidMoment(f64),
    #[error("sample {0} is negative or not finite")]
    InvalidSample(f64),
    #[error("perturbed initial data has L2 norm {norm} above the cap {cap}")]
    DataCapExceeded { norm: f64, cap: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spacetime(#[from] SpacetimeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Sample moment E[X^ρ] of a nonnegative quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub rho: f64,
    pub mean: f64,
    pub stderr: f64,
    pub root: f64,
    pub paths: usize,
}

impl MomentEstimate {
    pub fn from_samples(samples: &[f64], rho: f64) -> Result<Self, ExperimentError> {
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(ExperimentError::InvalidMoment(rho));
        }
        if samples.is_empty() {
            return Err(ExperimentError::NoSamples);
        }
        if let Some(&bad) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(ExperimentError::InvalidSample(bad));
        }
        let m = samples.len() as f64;
        let powers: Vec<f64> = samples.iter().map(|x| x.powf(rho)).collect();
        let mean = powers.iter().sum::<f64>() / m;
        let stderr = if samples.len() > 1 {
            let var = powers.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            rho,
            mean,
            stderr,
            root: mean.powf(1.0 / rho),
            paths: samples.len(),
        })
    }

    /// Delta-method standard error of `root`.
    pub fn root_stderr(&self) -> f64 {
        if self.mean == 0.0 {
            return 0.0;
        }
        self.root * self.stderr / (self.rho * self.mean)
    }
}

/// Every numeric knob of the Monte Carlo experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_points: usize,
    pub half_length: f64,
    pub master_steps: usize,
    /// Internal split steps per master step.
    pub substeps: usize,
    /// Record intervals on [0, 1]; 𝒳 norms are evaluated on this grid.
    pub records: usize,
    pub modes: Vec<ModeDescriptor>,
    pub lambda_noi: f64,
    pub lambda_ini: f64,
    pub initial: InitialData,
    pub n_list: Vec<usize>,
    /// Truncation levels; `f64::INFINITY` is the untruncated equation.
    pub m_list: Vec<f64>,
    pub rho_list: Vec<f64>,
    pub eta: f64,
    pub paths: usize,
    pub seed: u64,
    pub ceiling: f64,
    /// Adds n = Q/2 and n = Q rows to the convergence table to monitor the reference.
    pub reference_check: bool,
    pub stability_n: usize,
    pub stability_m: f64,
    pub deltas: Vec<f64>,
    pub tail_n: usize,
    pub tail_rho: f64,
    pub tail_levels: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_points: 512,
            half_length: 16.0,
            master_steps: 8192,
            substeps: 1,
            records: 256,
            modes: vec![
                ModeDescriptor::new(0.5, -1.5, 1.0),
                ModeDescriptor::new(0.5, 1.5, 1.0),
            ],
            lambda_noi: 3.0,
            lambda_ini: 2.0,
            initial: InitialData::default(),
            n_list: (3..=10).map(|e| 1 << e).collect(),
            m_list: vec![1.0, f64::INFINITY],
            rho_list: vec![1.0, 2.0, 5.0],
            eta: 0.5,
            paths: 64,
            seed: 20240917,
            ceiling: crate::dynamics::DEFAULT_CEILING,
            reference_check: true,
            stability_n: 64,
            stability_m: f64::INFINITY,
            deltas: vec![0.1, 0.05, 0.025, 0.0],
            tail_n: 64,
            tail_rho: 2.0,
            tail_levels: vec![0.5, 2.0, 2.5, 3.0, 4.0, 1000.0],
        }
    }
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidConfig(msg.into())
}

fn check_divides(name: &str, n: usize, q: usize) -> Result<(), ExperimentError> {
    if n == 0 || !q.is_multiple_of(n) {
        return Err(invalid(format!(
            "{name} = {n} must divide master_steps = {q}"
        )));
    }
    Ok(())
}

/// Grid, noise and initial-data objects shared by every path.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Arc<SpatialGrid>,
    pub model: NoiseModel,
}

impl ExperimentConfig {
    /// Structural checks and the Λ caps; builds the shared objects.
    pub fn validate(&self) -> Result<Setup, ExperimentError> {
        let grid = SpatialGrid::new(self.num_points, self.half_length)?;
        let q = self.master_steps;
        if q == 0 || !q.is_power_of_two() {
            return Err(invalid(format!("master_steps = {q} must be a power of two")));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps must be positive"));
        }
        if self.records == 0 || !(q * self.substeps).is_multiple_of(self.records) {
            return Err(invalid(format!(
                "records = {} must divide master_steps * substeps = {}",
                self.records,
                q * self.substeps
            )));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_list must be non-empty and strictly increasing"));
        }
        for &n in &self.n_list {
            check_divides("n", n, q)?;
        }
        check_divides("stability_n", self.stability_n, q)?;
        check_divides("tail_n", self.tail_n, q)?;
        if self.m_list.is_empty() || self.m_list.iter().any(|m| !(*m > 0.0)) {
            return Err(invalid("m_list must be non-empty with every m > 0"));
        }
        if !(self.stability_m > 0.0) {
            return Err(invalid("stability_m must be > 0"));
        }
        if self.rho_list.is_empty() || self.rho_list.iter().any(|r| !(*r >= 1.0 && r.is_finite())) {
            return Err(invalid("rho_list must be non-empty with every rho finite and >= 1"));
        }
        if !(self.tail_rho >= 1.0 && self.tail_rho.is_finite()) {
            return Err(invalid("tail_rho must be finite and >= 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta must be positive"));
        }
        if self.paths < 2 {
            return Err(invalid("paths must be at least 2"));
        }
        if !(self.ceiling > 0.0) {
            return Err(invalid("ceiling must be positive"));
        }
        if self.deltas.is_empty()
            || self.deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite()))
            || self.deltas.windows(2).any(|w| w[0] <= w[1])
        {
            return Err(invalid("deltas must be non-negative and strictly decreasing"));
        }
        if self.tail_levels.is_empty() || self.tail_levels.iter().any(|k| !(*k > 0.0)) {
            return Err(invalid("tail_levels must be non-empty and positive"));
        }
        if let InitialData::RandomAmplitude { min, max } = self.initial {
            if !(min <= max) {
                return Err(invalid("initial amplitude range needs min <= max"));
            }
        }
        let data_bound = self.initial.l2_bound();
        if data_bound > self.lambda_ini {
            return Err(invalid(format!(
                "lambda_ini = {} must dominate the initial L2 norm {data_bound}",
                self.lambda_ini
            )));
        }
        let model = build_standard_noise(&grid, &self.modes, self.lambda_noi).map_err(|e| match e {
            NoiseError::CapExceeded { total, cap } => invalid(format!(
                "lambda_noi = {cap} must dominate the sum of per-mode L1+Linf norms {total}"
            )),
            other => other.into(),
        })?;
        Ok(Setup { grid, model })
    }

    fn records(&self) -> Records {
        Records::Uniform(self.records)
    }

    fn base_spec(&self, n: usize, truncation: TruncationSpec) -> Result<SolverSpec, ExperimentError> {
        Ok(SolverSpec::wong_zakai(Partition::uniform(n, self.master_steps)?)
            .with_truncation(truncation)
            .with_substeps(self.substeps)
            .with_records(self.records())
            .with_ceiling(self.ceiling))
    }

    fn reference_spec(&self) -> SolverSpec {
        SolverSpec::limit()
            .with_substeps(self.substeps)
            .with_records(self.records())
            .with_ceiling(self.ceiling)
    }

    fn path_inputs(&self, setup: &Setup, path: u64) -> Result<(ComplexField, BrownianEnsemble), ExperimentError> {
        let ensemble = BrownianEnsemble::generate(setup.model.num_modes(), self.master_steps, self.seed, path)?;
        Ok((self.initial.sample(&setup.grid, self.seed, path), ensemble))
    }
}

/// Runs `work` for every path in parallel and returns results in path order;
/// the first failing path (in path order) is reported.
fn over_paths<T, F>(config: &ExperimentConfig, work: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> Result<T, ExperimentError> + Sync,
{
    let seed = config.seed;
    (0..config.paths as u64)
        .into_par_iter()
        .map(|p| {
            work(p).map_err(|e| match e {
                ExperimentError::Dynamics(source) => ExperimentError::PathFailed { path: p, seed, source },
                other => other,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn moments(samples: &[f64], rhos: &[f64]) -> Result<Vec<MomentEstimate>, ExperimentError> {
    rhos.iter().map(|&r| MomentEstimate::from_samples(samples, r)).collect()
}

fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

/// Floats in CSV and sidecar output: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub estimates: Vec<MomentEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Master resolution of the reference solve.
    pub reference_steps: usize,
    /// n = Q/2 and n = Q rows: the first measures the reference's own
    /// resolution error, the second is zero by construction.
    pub reference_rows: Vec<ConvergenceRow>,
    /// Set by the caller from the run configuration.
    pub fingerprint: String,
}

impl ConvergenceTable {
    pub fn row(&self, n: usize) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,rho,moment_mean,moment_stderr,root,paths")?;
        for row in self.rows.iter().chain(&self.reference_rows) {
            for e in &row.estimates {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.n,
                    fmt_float(e.rho),
                    fmt_float(e.mean),
                    fmt_float(e.stderr),
                    fmt_float(e.root),
                    e.paths
                )?;
            }
        }
        Ok(())
    }
}

/// ‖u⁽ⁿ⁾ - u^{ref}‖_{𝒳(0,1)} moments, all n sharing each path's Brownian motion.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceTable, ExperimentError> {
    let setup = config.validate()?;
    let q = config.master_steps;
    let mut ns = config.n_list.clone();
    let mut extra = 0;
    if config.reference_check {
        for n in [q / 2, q] {
            if n > *ns.iter().max().unwrap_or(&0) {
                ns.push(n);
                extra += 1;
            }
        }
    }
    let specs = ns
        .iter()
        .map(|&n| config.base_spec(n, TruncationSpec::none()))
        .collect::<Result<Vec<_>, _>>()?;
    let reference = config.reference_spec();
    let per_path = over_paths(config, |p| {
        let (f, ensemble) = config.path_inputs(&setup, p)?;
        let u_ref = evolve(&f, &setup.model, &ensemble, &reference)?;
        specs
            .iter()
            .map(|spec| {
                let u_n = evolve(&f, &setup.model, &ensemble, spec)?;
                Ok(difference_norms(&u_n, &u_ref)?.total())
            })
            .collect::<Result<Vec<f64>, ExperimentError>>()
    })?;
    let mut rows = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            Ok(ConvergenceRow {
                n,
                estimates: moments(&column(&per_path, i), &config.rho_list)?,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let reference_rows = rows.split_off(rows.len() - extra);
    Ok(ConvergenceTable {
        rows,
        reference_steps: q,
        reference_rows,
        fingerprint: String::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformCell {
    pub n: usize,
    pub m: f64,
    pub estimates: Vec<MomentEstimate>,
    /// max over paths of |‖u‖_{𝒳₁} - ‖f‖₂|.
    pub x1_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformTable {
    pub cells: Vec<UniformCell>,
    pub rho_list: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

impl UniformTable {
    /// max over cells of |root - median root| / median root, for moment `rho_index`.
    pub fn variation(&self, rho_index: usize) -> f64 {
        let mut roots: Vec<f64> = self.cells.iter().map(|c| c.estimates[rho_index].root).collect();
        let med = median(&mut roots);
        if med == 0.0 {
            return 0.0;
        }
        roots.iter().map(|r| (r - med).abs() / med).fold(0.0, f64::max)
    }

    pub fn max_root(&self, rho_index: usize) -> f64 {
        self.cells.iter().map(|c| c.estimates[rho_index].root).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,m,rho,moment_mean,moment_stderr,paths")?;
        for c in &self.cells {
            for e in &c.estimates {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.n,
                    fmt_float(c.m),
                    fmt_float(e.rho),
                    fmt_float(e.mean),
                    fmt_float(e.stderr),
                    e.paths
                )?;
            }
        }
        Ok(())
    }
}

/// ‖u⁽ⁿ⁾ₘ‖_{𝒳(0,1)} moments for every (n, m) cell.
pub fn run_uniform_bounds(config: &ExperimentConfig) -> Result<UniformTable, ExperimentError> {
    let setup = config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.n_list {
        for &m in &config.m_list {
            cells.push((n, m, config.base_spec(n, TruncationSpec::at(m)?)?));
        }
    }
    let per_path = over_paths(config, |p| {
        let (f, ensemble) = config.path_inputs(&setup, p)?;
        let mass = f.lp_norm(2.0)?;
        let mut out = Vec::with_capacity(2 * cells.len());
        for (_, _, spec) in &cells {
            let u = evolve(&f, &setup.model, &ensemble, spec)?;
            let norms = x_norms(&u, TimeInterval::unit())?;
            out.push(norms.total());
            out.push((norms.x1 - mass).abs());
        }
        Ok(out)
    })?;
    let cells = cells
        .iter()
        .enumerate()
        .map(|(i, (n, m, _))| {
            Ok(UniformCell {
                n: *n,
                m: *m,
                estimates: moments(&column(&per_path, 2 * i), &config.rho_list)?,
                x1_deviation: column(&per_path, 2 * i + 1).into_iter().fold(0.0, f64::max),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(UniformTable {
        cells,
        rho_list: config.rho_list.clone(),
    })
}

/// Fixed perturbation directions: a unit-L² data direction g and per-mode
/// directions h_k with ‖h_k‖₁ + ‖h_k‖_∞ = 1.
#[derive(Debug, Clone)]
pub struct Perturbation {
    data: ComplexField,
    modes: Vec<RealField>,
}

impl Perturbation {
    /// g ∝ x·e^{-x²/2}; h_k a bump on the support of V_k.
    pub fn standard(grid: &Arc<SpatialGrid>, descriptors: &[ModeDescriptor]) -> Result<Self, ExperimentError> {
        let g = ComplexField::from_fn(grid.clone(), |x| Complex64::new(x * (-x * x / 2.0).exp(), 0.0));
        let data = g.scale(Complex64::new(1.0 / g.lp_norm(2.0)?, 0.0));
        let modes = descriptors
            .iter()
            .map(|d| {
                let h = RealField::from_fn(grid.clone(), |x| ModeDescriptor::new(1.0, d.center, d.width).eval(x));
                let size = h.lp_norm(1.0)? + h.lp_norm(f64::INFINITY)?;
                let mut unit = RealField::zeros(grid.clone());
                unit.axpy(1.0 / size, &h);
                Ok(unit)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        Ok(Self { data, modes })
    }

    /// Data-only perturbation.
    pub fn data_only(grid: &Arc<SpatialGrid>, num_modes: usize) -> Result<Self, ExperimentError> {
        let mut p = Self::standard(grid, &[])?;
        p.modes = vec![RealField::zeros(grid.clone()); num_modes];
        Ok(p)
    }

    /// (f + δg, {V_k + δh_k}) with the caps re-checked.
    pub fn apply(
        &self,
        delta: f64,
        f: &ComplexField,
        model: &NoiseModel,
        lambda_ini: f64,
        lambda_noi: f64,
    ) -> Result<(ComplexField, NoiseModel), ExperimentError> {
        let shifted = self.data.scale(Complex64::new(delta, 0.0));
        let f_new = f.add(&shifted)?;
        let norm = f_new.lp_norm(2.0)?;
        if norm > lambda_ini {
            return Err(ExperimentError::DataCapExceeded { norm, cap: lambda_ini });
        }
        let modes = model
            .modes()
            .iter()
            .zip(&self.modes)
            .map(|(v, h)| {
                let mut out = v.clone();
                out.axpy(delta, h);
                out
            })
            .collect();
        let model_new = NoiseModel::from_modes(model.grid().clone(), modes, lambda_noi)?;
        Ok((f_new, model_new))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub delta: f64,
    pub estimates: Vec<MomentEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTable {
    pub n: usize,
    pub m: f64,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delta,rho,moment_mean,moment_stderr,paths")?;
        for row in &self.rows {
            for e in &row.estimates {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_float(row.delta),
                    fmt_float(e.rho),
                    fmt_float(e.mean),
                    fmt_float(e.stderr),
                    e.paths
                )?;
            }
        }
        Ok(())
    }
}

/// Coupled ‖u⁽ⁿ⁾ₘ - ũ⁽ⁿ⁾ₘ‖_{𝒳(0,1)} moments for each δ in `config.deltas`.
pub fn run_stability(config: &ExperimentConfig) -> Result<StabilityTable, ExperimentError> {
    let setup = config.validate()?;
    let perturbation = Perturbation::standard(&setup.grid, &config.modes)?;
    run_stability_with(config, &setup, &perturbation)
}

pub fn run_stability_with(
    config: &ExperimentConfig,
    setup: &Setup,
    perturbation: &Perturbation,
) -> Result<StabilityTable, ExperimentError> {
    let spec = config.base_spec(config.stability_n, TruncationSpec::at(config.stability_m)?)?;
    let per_path = over_paths(config, |p| {
        let (f, ensemble) = config.path_inputs(setup, p)?;
        let u = evolve(&f, &setup.model, &ensemble, &spec)?;
        config
            .deltas
            .iter()
            .map(|&delta| {
                let (f_new, model_new) =
                    perturbation.apply(delta, &f, &setup.model, config.lambda_ini, config.lambda_noi)?;
                let v = evolve(&f_new, &model_new, &ensemble, &spec)?;
                Ok(difference_norms(&u, &v)?.total())
            })
            .collect::<Result<Vec<f64>, ExperimentError>>()
    })?;
    let rows = config
        .deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            Ok(StabilityRow {
                delta,
                estimates: moments(&column(&per_path, i), &config.rho_list)?,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(StabilityTable {
        n: config.stability_n,
        m: config.stability_m,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub level: f64,
    pub empirical_freq: f64,
    /// K^{-ρ}·E‖u‖^ρ.
    pub chebyshev_bound: f64,
    pub binomial_stderr: f64,
}

impl TailRow {
    pub fn within_bound(&self) -> bool {
        self.empirical_freq <= self.chebyshev_bound + 4.0 * self.binomial_stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    pub moment: MomentEstimate,
    pub rows: Vec<TailRow>,
    pub paths: usize,
}

impl TailTable {
    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(TailRow::within_bound)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "K,empirical_freq,chebyshev_bound,paths")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_float(r.level),
                fmt_float(r.empirical_freq),
                fmt_float(r.chebyshev_bound),
                self.paths
            )?;
        }
        Ok(())
    }
}

/// Tail table from per-path 𝒳 norms.
pub fn tail_table(norms: &[f64], rho: f64, levels: &[f64]) -> Result<TailTable, ExperimentError> {
    let moment = MomentEstimate::from_samples(norms, rho)?;
    let m = norms.len() as f64;
    let rows = levels
        .iter()
        .map(|&level| {
            let freq = norms.iter().filter(|&&x| x >= level).count() as f64 / m;
            TailRow {
                level,
                empirical_freq: freq,
                chebyshev_bound: level.powf(-rho) * moment.mean,
                binomial_stderr: (freq * (1.0 - freq) / m).sqrt(),
            }
        })
        .collect();
    Ok(TailTable {
        moment,
        rows,
        paths: norms.len(),
    })
}

/// Exceedance frequencies of ‖u⁽ⁿ⁾‖_{𝒳(0,1)} against the Chebyshev bound.
pub fn run_tail_estimate(config: &ExperimentConfig) -> Result<TailTable, ExperimentError> {
    let setup = config.validate()?;
    let spec = config.base_spec(config.tail_n, TruncationSpec::none())?;
    let norms = over_paths(config, |p| {
        let (f, ensemble) = config.path_inputs(&setup, p)?;
        let u = evolve(&f, &setup.model, &ensemble, &spec)?;
        Ok(x_norms(&u, TimeInterval::unit())?.total())
    })?;
    tail_table(&norms, config.tail_rho, &config.tail_levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_estimate_by_hand() {
        let e = MomentEstimate::from_samples(&[1.0, 2.0, 3.0], 2.0).unwrap();
        assert!((e.mean - 14.0 / 3.0).abs() < 1e-15);
        let var = ((1.0 - 14.0 / 3.0_f64).powi(2) + (4.0 - 14.0 / 3.0_f64).powi(2) + (9.0 - 14.0 / 3.0_f64).powi(2)) / 2.0;
        assert!((e.stderr - (var / 3.0).sqrt()).abs() < 1e-15);
        assert!((e.root - (14.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.paths, 3);
        assert!(MomentEstimate::from_samples(&[], 1.0).is_err());
        assert!(MomentEstimate::from_samples(&[1.0], 0.5).is_err());
        assert!(MomentEstimate::from_samples(&[-1.0], 1.0).is_err());
        let z = MomentEstimate::from_samples(&[0.0; 4], 5.0).unwrap();
        assert_eq!((z.mean, z.stderr, z.root, z.root_stderr()), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn config_rules() {
        let base = ExperimentConfig::default();
        let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.n_list = vec![3]),
            Box::new(|c| c.n_list = vec![16, 8]),
            Box::new(|c| c.master_steps = 1000),
            Box::new(|c| c.records = 3),
            Box::new(|c| c.m_list = vec![0.0]),
            Box::new(|c| c.rho_list = vec![0.5]),
            Box::new(|c| c.eta = 0.0),
            Box::new(|c| c.paths = 1),
            Box::new(|c| c.deltas = vec![0.05, 0.1]),
            Box::new(|c| c.lambda_ini = 1.0),
            Box::new(|c| c.lambda_noi = 1.0),
            Box::new(|c| c.modes = vec![ModeDescriptor::new(0.5, 7.0, 1.0)]),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(c.validate().is_err(), "case {i} accepted");
        }
        let mut c = base;
        c.n_list = vec![3];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("must divide master_steps"), "{msg}");
    }

    #[test]
    fn median_and_variation() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let est = |root: f64| MomentEstimate { rho: 1.0, mean: root, stderr: 0.0, root, paths: 1 };
        let t = UniformTable {
            cells: [1.0, 1.1, 0.8]
                .iter()
                .map(|&r| UniformCell { n: 1, m: 1.0, estimates: vec![est(r)], x1_deviation: 0.0 })
                .collect(),
            rho_list: vec![1.0],
        };
        assert!((t.variation(0) - 0.2).abs() < 1e-12);
        assert_eq!(t.max_root(0), 1.1);
    }

    #[test]
    fn tail_frequencies_respect_markov() {
        let norms = [0.5, 1.0, 1.5, 2.0, 4.0];
        let t = tail_table(&norms, 2.0, &[0.1, 1.5, 100.0]).unwrap();
        assert_eq!(t.rows[0].empirical_freq, 1.0);
        assert_eq!(t.rows[1].empirical_freq, 0.6);
        assert_eq!(t.rows[2].empirical_freq, 0.0);
        assert!(t.all_within_bound());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300, 0.0] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_float(f64::INFINITY), "inf");
    }

    #[test]
    fn perturbation_directions_are_normalized() {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        let d = [ModeDescriptor::new(0.5, 1.0, 1.0)];
        let p = Perturbation::standard(&g, &d).unwrap();
        assert!((p.data.lp_norm(2.0).unwrap() - 1.0).abs() < 1e-14);
        let h = &p.modes[0];
        assert!((h.lp_norm(1.0).unwrap() + h.lp_norm(f64::INFINITY).unwrap() - 1.0).abs() < 1e-14);
        let model = build_standard_noise(&g, &d, 10.0).unwrap();
        let f = InitialData::default().sample(&g, 0, 0);
        let (f0, m0) = p.apply(0.0, &f, &model, 10.0, 10.0).unwrap();
        assert_eq!(f0, f);
        assert_eq!(m0.modes()[0].values(), model.modes()[0].values());
        assert!(matches!(
            p.apply(0.5, &f, &model, 1.6, 10.0),
            Err(ExperimentError::DataCapExceeded { .. })
        ));
        assert!(matches!(
            p.apply(0.5, &f, &model, 10.0, model.lambda_noi() + 0.1),
            Err(ExperimentError::Noise(NoiseError::CapExceeded { .. }))
        ));
    }
}
