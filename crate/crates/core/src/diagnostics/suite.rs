//! The full estimate suite with its configuration.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_discrete_burkholder, check_dispersive, check_kolmogorov, check_semigroup_continuity,
    check_strichartz, classify_intervals, crude_interval_ratios, linear_noise_expectation_test,
    max_relative_step, relative_change, scalar_brownian_max_moment, source_maximal_functions,
    ConstantCoefficient, DecayingFeedback, DiagnosticsError, EstimateReport, StrichartzPair,
};
use crate::dynamics::{evolve, InitialData, Records, SolverSpec};
use crate::experiments::MomentEstimate;
use crate::grid::SpatialGrid;
use crate::noise::{build_standard_noise, BrownianEnsemble, ModeDescriptor, NoiseModel, Partition, WzDriver};

/// Knobs of every check in [`run_estimate_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub num_points: usize,
    pub half_length: f64,
    pub modes: Vec<ModeDescriptor>,
    pub lambda_noi: f64,
    pub initial: InitialData,
    pub seed: u64,

    pub dispersive_samples: usize,
    pub p_list: Vec<f64>,
    pub strichartz_samples: usize,
    pub strichartz_time_samples: usize,
    pub strichartz_ceiling: f64,

    pub burkholder_trials: usize,
    pub burkholder_rho: f64,
    pub burkholder_p: f64,
    pub burkholder_n: usize,
    pub burkholder_ceiling: f64,
    /// Relative tolerance between the f ≡ 1 Burkholder ratio and the scalar oracle.
    pub oracle_tolerance: f64,

    pub kolmogorov_alpha: f64,
    pub kolmogorov_steps: usize,
    pub kolmogorov_stride: usize,
    pub kolmogorov_trials: usize,
    pub kolmogorov_ceiling: f64,

    pub source_steps: usize,
    pub source_eval_stride: usize,
    pub source_n_list: Vec<usize>,
    /// Must be even; the first half is compared against the whole.
    pub source_paths: usize,
    pub source_rho_list: Vec<f64>,
    pub eta: f64,
    /// Largest relative change of a moment root under n- or path-doubling.
    pub stability_tolerance: f64,

    pub crude_steps: usize,
    pub crude_n_list: Vec<usize>,
    pub crude_paths: usize,
    pub crude_ceiling: f64,

    pub linear_paths: usize,
    pub linear_steps: usize,

    pub alpha_list: Vec<f64>,
    pub semigroup_samples: usize,
    pub semigroup_ceiling_a1: f64,
    pub semigroup_ceiling_a2: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            num_points: 256,
            half_length: 16.0,
            modes: vec![
                ModeDescriptor::new(0.5, -1.5, 1.0),
                ModeDescriptor::new(0.5, 1.5, 1.0),
            ],
            lambda_noi: 3.0,
            initial: InitialData::default(),
            seed: 20240917,
            dispersive_samples: 64,
            p_list: vec![2.0, 4.0, 6.0, 10.0, f64::INFINITY],
            strichartz_samples: 16,
            strichartz_time_samples: 64,
            strichartz_ceiling: 2.0,
            burkholder_trials: 4096,
            burkholder_rho: 2.0,
            burkholder_p: 2.0,
            burkholder_n: 64,
            burkholder_ceiling: 4.0,
            oracle_tolerance: 0.05,
            kolmogorov_alpha: 0.25,
            kolmogorov_steps: 256,
            kolmogorov_stride: 8,
            kolmogorov_trials: 256,
            kolmogorov_ceiling: 10.0,
            source_steps: 256,
            source_eval_stride: 8,
            source_n_list: vec![8, 16, 32],
            source_paths: 128,
            source_rho_list: vec![1.0, 2.0, 5.0],
            eta: 0.5,
            stability_tolerance: 0.2,
            crude_steps: 512,
            crude_n_list: vec![8, 16, 32, 64, 128, 256],
            crude_paths: 16,
            crude_ceiling: 10.0,
            linear_paths: 4096,
            linear_steps: 256,
            alpha_list: vec![0.25, 0.5, 0.75],
            semigroup_samples: 32,
            semigroup_ceiling_a1: 2.0,
            semigroup_ceiling_a2: 8.0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> DiagnosticsError {
    DiagnosticsError::InvalidParameter(msg.into())
}

impl DiagnosticsConfig {
    /// Checks the cross-field rules and builds the grid and noise model.
    pub fn validate(&self) -> Result<(Arc<SpatialGrid>, NoiseModel), DiagnosticsError> {
        let grid = SpatialGrid::new(self.num_points, self.half_length)?;
        let model = build_standard_noise(&grid, &self.modes, self.lambda_noi)?;
        let divides = |n: usize, q: usize| n > 0 && q.is_multiple_of(n);
        if let Some(n) = self.source_n_list.iter().find(|n| !divides(**n, self.source_steps)) {
            return Err(invalid(format!("source n = {n} must divide source_steps = {}", self.source_steps)));
        }
        if let Some(n) = self.crude_n_list.iter().find(|n| !divides(**n, self.crude_steps)) {
            return Err(invalid(format!("crude n = {n} must divide crude_steps = {}", self.crude_steps)));
        }
        if self.source_paths < 4 || !self.source_paths.is_multiple_of(2) {
            return Err(invalid("source_paths must be even and at least 4"));
        }
        if self.source_n_list.is_empty() || self.crude_n_list.is_empty() {
            return Err(invalid("n lists must be non-empty"));
        }
        if !divides(self.kolmogorov_stride, self.kolmogorov_steps) {
            return Err(invalid("kolmogorov_stride must divide kolmogorov_steps"));
        }
        if self.burkholder_n == 0 {
            return Err(invalid("burkholder_n must be positive"));
        }
        if !(self.eta > 0.0) {
            return Err(invalid("eta must be positive"));
        }
        Ok((grid, model))
    }
}

/// Per-n moments of the source-term L⁵ norms and of J^{1/5}.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRow {
    pub n: usize,
    pub mar_l5: Vec<MomentEstimate>,
    pub qua_l5: Vec<MomentEstimate>,
    /// Moments of J^{1/5}, J the number of type-B intervals.
    pub j: Vec<MomentEstimate>,
    /// Same three on the first half of the paths.
    pub half: [Vec<MomentEstimate>; 3],
    /// max over paths of budget/η on the type-B intervals.
    pub worst_budget_ratio: f64,
    /// Every path's classification tiles [0, 1].
    pub tiles: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceStudy {
    pub rows: Vec<SourceRow>,
    pub rho_list: Vec<f64>,
}

struct PathSource {
    mar: f64,
    qua: f64,
    j_root: f64,
    worst_budget: f64,
    tiles: bool,
}

fn moments(samples: &[f64], rhos: &[f64]) -> Result<Vec<MomentEstimate>, DiagnosticsError> {
    rhos.iter()
        .map(|&r| Ok(MomentEstimate::from_samples(samples, r)?))
        .collect()
}

fn run_source_study(config: &DiagnosticsConfig, grid: &Arc<SpatialGrid>, model: &NoiseModel) -> Result<SourceStudy, DiagnosticsError> {
    let q = config.source_steps;
    let mut rows = Vec::new();
    for &n in &config.source_n_list {
        let spec = SolverSpec::wong_zakai(Partition::uniform(n, q)?).with_records(Records::Uniform(q));
        let per_path = (0..config.source_paths as u64)
            .into_par_iter()
            .map(|path| {
                let ensemble = BrownianEnsemble::generate(model.num_modes(), q, config.seed, path)?;
                let initial = config.initial.sample(grid, config.seed, path);
                let traj = evolve(&initial, model, &ensemble, &spec)?;
                let driver = WzDriver::new(Partition::uniform(n, q)?, &ensemble, model)?;
                let source = source_maximal_functions(&traj, &driver, config.source_eval_stride)?;
                let classes = classify_intervals(&driver, &source, config.eta)?;
                let (mar, qua) = source.l5_norms();
                Ok(PathSource {
                    mar,
                    qua,
                    j_root: (classes.j_count() as f64).powf(0.2),
                    worst_budget: classes.worst_budget_ratio(&source),
                    tiles: classes.tiles_unit_interval(1e-12),
                })
            })
            .collect::<Vec<Result<PathSource, DiagnosticsError>>>()
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let column = |f: fn(&PathSource) -> f64| per_path.iter().map(f).collect::<Vec<f64>>();
        let (mar, qua, js) = (column(|p| p.mar), column(|p| p.qua), column(|p| p.j_root));
        let h = per_path.len() / 2;
        let rhos = &config.source_rho_list;
        rows.push(SourceRow {
            n,
            mar_l5: moments(&mar, rhos)?,
            qua_l5: moments(&qua, rhos)?,
            j: moments(&js, rhos)?,
            half: [moments(&mar[..h], rhos)?, moments(&qua[..h], rhos)?, moments(&js[..h], rhos)?],
            worst_budget_ratio: per_path.iter().map(|p| p.worst_budget).fold(0.0, f64::max),
            tiles: per_path.iter().all(|p| p.tiles),
        });
    }
    Ok(SourceStudy {
        rows,
        rho_list: config.source_rho_list.clone(),
    })
}

fn row_moment(row: &SourceRow, which: usize, rho_index: usize) -> &MomentEstimate {
    match which {
        0 => &row.mar_l5[rho_index],
        1 => &row.qua_l5[rho_index],
        _ => &row.j[rho_index],
    }
}

/// Classification invariants plus stability of the source-term moments and
/// of J^{1/5} under n-doubling and path-doubling.
pub fn source_reports(config: &DiagnosticsConfig) -> Result<(SourceStudy, Vec<EstimateReport>), DiagnosticsError> {
    let (grid, model) = config.validate()?;
    let study = run_source_study(config, &grid, &model)?;
    let paths = config.source_paths;
    let mut reports = Vec::new();

    let worst_budget = study.rows.iter().map(|r| r.worst_budget_ratio).fold(0.0, f64::max);
    reports.push(EstimateReport::new("classification_budget", format!("eta={}", config.eta), paths, worst_budget, 1.0 + 1e-12));
    let untiled = study.rows.iter().filter(|r| !r.tiles).count();
    reports.push(EstimateReport::new("classification_tiling", format!("eta={}", config.eta), paths, untiled as f64, 0.0));

    let names = ["source_mar_stability", "source_qua_stability", "source_j_stability"];
    for (which, name) in names.iter().enumerate() {
        for (ri, &rho) in study.rho_list.iter().enumerate() {
            let pick = |row: &SourceRow| -> MomentEstimate { *row_moment(row, which, ri) };
            let roots: Vec<f64> = study.rows.iter().map(|r| pick(r).root).collect();
            let n_change = max_relative_step(&roots);
            let path_change = study
                .rows
                .iter()
                .map(|r| relative_change(r.half[which][ri].root, pick(r).root))
                .fold(0.0, f64::max);
            reports.push(
                EstimateReport::new(*name, format!("rho={rho}"), paths, n_change.max(path_change), config.stability_tolerance)
                    .with_moments(study.rows.iter().map(pick).collect())
                    .with_detail("n_doubling_change", n_change)
                    .with_detail("path_doubling_change", path_change),
            );
        }
    }
    Ok((study, reports))
}

/// Worst ‖v‖_𝒳(I_j)/(1 + ‖Δ_jW‖_∞) per n, the maximum over n and its largest
/// relative change between consecutive n.
pub fn crude_bound_reports(config: &DiagnosticsConfig) -> Result<Vec<EstimateReport>, DiagnosticsError> {
    let (grid, model) = config.validate()?;
    let q = config.crude_steps;
    let mut reports = Vec::new();
    let mut overall: f64 = 0.0;
    let mut per_n = Vec::new();
    for &n in &config.crude_n_list {
        let spec = SolverSpec::wong_zakai(Partition::uniform(n, q)?).with_records(Records::Uniform(q));
        let worst = (0..config.crude_paths as u64)
            .into_par_iter()
            .map(|path| {
                let ensemble = BrownianEnsemble::generate(model.num_modes(), q, config.seed, path)?;
                let initial = config.initial.sample(&grid, config.seed, path);
                let traj = evolve(&initial, &model, &ensemble, &spec)?;
                let driver = WzDriver::new(Partition::uniform(n, q)?, &ensemble, &model)?;
                Ok(crude_interval_ratios(&traj, &driver)?.into_iter().fold(0.0, f64::max))
            })
            .collect::<Vec<Result<f64, DiagnosticsError>>>()
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        overall = overall.max(worst);
        per_n.push(worst);
        reports.push(EstimateReport::new("crude_bound", format!("n={n}"), config.crude_paths, worst, config.crude_ceiling));
    }
    reports.push(EstimateReport::new("crude_bound_uniform", "all_n", config.crude_paths, overall, config.crude_ceiling));
    reports.push(EstimateReport::new(
        "crude_bound_stability",
        "n_doubling",
        config.crude_paths,
        max_relative_step(&per_n),
        config.stability_tolerance,
    ));
    Ok(reports)
}

/// With f ≡ 1 and a single unit mode the Burkholder ratio is ‖max_j |B(t_j)|‖_{L^ρ};
/// the relative deviation from the independent scalar oracle is the reported ratio.
pub fn burkholder_oracle_report(config: &DiagnosticsConfig) -> Result<EstimateReport, DiagnosticsError> {
    let grid = SpatialGrid::new(config.num_points, config.half_length)?;
    let unit = build_standard_noise(&grid, &[ModeDescriptor::new(1.0, 0.0, 1.0)], f64::INFINITY)?;
    let n = config.burkholder_n;
    let partition = Partition::uniform(n, n)?;
    let burk = check_discrete_burkholder(
        &unit,
        &partition,
        &ConstantCoefficient(1.0),
        config.burkholder_rho,
        config.burkholder_p,
        config.burkholder_trials,
        f64::INFINITY,
        config.seed,
    )?;
    let oracle = scalar_brownian_max_moment(partition.breakpoints(), config.burkholder_rho, config.burkholder_trials, config.seed)?;
    let deviation = relative_change(oracle.root, burk.worst_ratio);
    Ok(EstimateReport::new("burkholder_oracle", format!("rho={},n={n}", config.burkholder_rho), config.burkholder_trials, deviation, config.oracle_tolerance)
        .with_moments(vec![oracle])
        .with_detail("burkholder_ratio", burk.worst_ratio)
        .with_detail("oracle_root", oracle.root))
}

/// Runs every check in a fixed order.
pub fn run_estimate_suite(config: &DiagnosticsConfig) -> Result<Vec<EstimateReport>, DiagnosticsError> {
    let (grid, model) = config.validate()?;
    let seed = config.seed;
    let mut reports = check_dispersive(&grid, config.dispersive_samples, &config.p_list, seed)?;
    let pairs = StrichartzPair::STANDARD
        .iter()
        .map(|&(q, r)| StrichartzPair::new(q, r))
        .collect::<Result<Vec<_>, _>>()?;
    reports.extend(check_strichartz(
        &grid,
        &pairs,
        config.strichartz_samples,
        config.strichartz_time_samples,
        config.strichartz_ceiling,
        seed,
    )?);

    let partition = Partition::uniform(config.burkholder_n, config.burkholder_n)?;
    reports.push(check_discrete_burkholder(
        &model,
        &partition,
        &DecayingFeedback,
        config.burkholder_rho,
        config.burkholder_p,
        config.burkholder_trials,
        config.burkholder_ceiling,
        seed,
    )?);
    reports.push(burkholder_oracle_report(config)?);
    reports.push(check_kolmogorov(
        &model,
        config.kolmogorov_steps,
        config.kolmogorov_alpha,
        config.burkholder_p,
        config.burkholder_rho,
        config.kolmogorov_trials,
        config.kolmogorov_stride,
        config.kolmogorov_ceiling,
        seed,
    )?);

    reports.extend(source_reports(config)?.1);
    reports.extend(crude_bound_reports(config)?);

    let unit = build_standard_noise(&grid, &[ModeDescriptor::new(1.0, 0.0, 1.0)], f64::INFINITY)?;
    let initial = config.initial.sample(&grid, seed, 0);
    let linear = linear_noise_expectation_test(&initial, &unit, config.linear_steps, config.linear_paths, seed)?;
    reports.push(linear.exactness);
    reports.push(linear.mean_field);

    reports.extend(check_semigroup_continuity(
        &grid,
        &config.alpha_list,
        config.semigroup_samples,
        (config.semigroup_ceiling_a1, config.semigroup_ceiling_a2),
        seed,
    )?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DiagnosticsConfig {
        DiagnosticsConfig {
            num_points: 128,
            source_steps: 64,
            source_n_list: vec![4, 8],
            source_paths: 8,
            crude_steps: 64,
            crude_n_list: vec![4, 16],
            crude_paths: 2,
            ..DiagnosticsConfig::default()
        }
    }

    #[test]
    fn default_validates() {
        assert!(DiagnosticsConfig::default().validate().is_ok());
        let bad = DiagnosticsConfig {
            source_n_list: vec![3],
            ..DiagnosticsConfig::default()
        };
        assert!(bad.validate().is_err());
        let odd = DiagnosticsConfig {
            source_paths: 7,
            ..DiagnosticsConfig::default()
        };
        assert!(odd.validate().is_err());
    }

    #[test]
    fn classification_invariants_hold() {
        let (study, reports) = source_reports(&small()).unwrap();
        assert_eq!(study.rows.len(), 2);
        for name in ["classification_budget", "classification_tiling"] {
            let r = reports.iter().find(|r| r.name == name).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn crude_reports_cover_every_n() {
        let reports = crude_bound_reports(&small()).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports[..3].iter().all(|r| r.worst_ratio > 0.0 && r.worst_ratio.is_finite()));
    }
}
