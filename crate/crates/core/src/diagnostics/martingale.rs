//! Discrete Burkholder and Kolmogorov–Hölder moment checks for the noise.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{relative_change, DiagnosticsError, EstimateReport};
use crate::experiments::MomentEstimate;
use crate::grid::{RealField, SpatialGrid};
use crate::noise::{substream, BrownianEnsemble, NoiseModel, Partition};

/// Coefficient fields f_k for Σ_k f_k Δ_kW, built from the path history up to
/// t_k only.
pub trait AdaptedCoefficients: Sync {
    /// Self-declared measurability with respect to the history up to t_k.
    fn is_adapted(&self) -> bool;

    /// f_k given `history[mode][i] = B_mode(t_i)` for i = 0..=k only.
    fn coefficient(&self, grid: &Arc<SpatialGrid>, k: usize, history: &[&[f64]]) -> RealField;
}

/// f_k ≡ c.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCoefficient(pub f64);

impl AdaptedCoefficients for ConstantCoefficient {
    fn is_adapted(&self) -> bool {
        true
    }

    fn coefficient(&self, grid: &Arc<SpatialGrid>, _k: usize, _history: &[&[f64]]) -> RealField {
        RealField::from_fn(grid.clone(), |_| self.0)
    }
}

/// f_k(x) = e^{-x²/2} / (1 + B₁(t_k)²): a bounded path-dependent coefficient.
#[derive(Debug, Clone, Copy)]
pub struct DecayingFeedback;

impl AdaptedCoefficients for DecayingFeedback {
    fn is_adapted(&self) -> bool {
        true
    }

    fn coefficient(&self, grid: &Arc<SpatialGrid>, k: usize, history: &[&[f64]]) -> RealField {
        let b = history.first().map_or(0.0, |h| h[k]);
        let damp = 1.0 / (1.0 + b * b);
        RealField::from_fn(grid.clone(), |x| damp * (-x * x / 2.0).exp())
    }
}

/// Per-trial left and right sides of the discrete Burkholder inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct BurkholderSides {
    /// max_j ‖Σ_{k<j} f_k Δ_kW‖_{L^p_x}.
    pub left: Vec<f64>,
    /// (Σ_k (t_{k+1} - t_k)‖f_k‖²_∞)^{1/2} · Σ_m ‖V_m‖_p.
    pub right: Vec<f64>,
}

/// Left and right sides for `trials` independent Brownian realizations.
pub fn burkholder_sides<C: AdaptedCoefficients>(
    model: &NoiseModel,
    partition: &Partition,
    coefficients: &C,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<BurkholderSides, DiagnosticsError> {
    if !coefficients.is_adapted() {
        return Err(DiagnosticsError::NonAdapted);
    }
    if !(p >= 2.0) {
        return Err(DiagnosticsError::InvalidParameter(format!("p = {p} must be >= 2")));
    }
    let grid = model.grid();
    let mode_norm: f64 = model
        .modes()
        .iter()
        .map(|v| v.lp_norm(p))
        .sum::<Result<f64, _>>()?;
    let indices = partition.indices().to_vec();
    let breaks = partition.breakpoints().to_vec();
    let q = partition.master_steps();
    let sides = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let ensemble = BrownianEnsemble::generate(model.num_modes(), q, seed, trial)?;
            let history: Vec<Vec<f64>> = (0..model.num_modes())
                .map(|m| indices.iter().map(|&i| ensemble.path(m)[i]).collect())
                .collect();
            let mut sum = RealField::zeros(grid.clone());
            let mut left: f64 = 0.0;
            let mut quadratic = 0.0;
            for k in 0..indices.len() - 1 {
                let prefix: Vec<&[f64]> = history.iter().map(|h| &h[..=k]).collect();
                let f_k = coefficients.coefficient(grid, k, &prefix);
                let sup = f_k.max_abs();
                quadratic += (breaks[k + 1] - breaks[k]) * sup * sup;
                let increments: Vec<f64> = history.iter().map(|h| h[k + 1] - h[k]).collect();
                let dw = model.combine(&increments);
                let values: Vec<f64> = sum
                    .values()
                    .iter()
                    .zip(f_k.values())
                    .zip(dw.values())
                    .map(|((s, f), w)| s + f * w)
                    .collect();
                sum = RealField::new(grid.clone(), values)?;
                left = left.max(sum.lp_norm(p)?);
            }
            Ok((left, quadratic.sqrt() * mode_norm))
        })
        .collect::<Vec<Result<(f64, f64), DiagnosticsError>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let (left, right) = sides.into_iter().unzip();
    Ok(BurkholderSides { left, right })
}

fn moment_ratio(left: &[f64], right: &[f64], rho: f64) -> Result<(MomentEstimate, MomentEstimate, f64), DiagnosticsError> {
    let l = MomentEstimate::from_samples(left, rho)?;
    let r = MomentEstimate::from_samples(right, rho)?;
    let ratio = if r.root == 0.0 {
        if l.root == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        l.root / r.root
    };
    Ok((l, r, ratio))
}

/// ‖LHS‖_{L^ρ_ω} / ‖RHS‖_{L^ρ_ω}; the half-trial ratio is kept as a detail.
#[allow(clippy::too_many_arguments)]
pub fn check_discrete_burkholder<C: AdaptedCoefficients>(
    model: &NoiseModel,
    partition: &Partition,
    coefficients: &C,
    rho: f64,
    p: f64,
    trials: usize,
    ceiling: f64,
    seed: u64,
) -> Result<EstimateReport, DiagnosticsError> {
    if !(rho >= 2.0) {
        return Err(DiagnosticsError::InvalidParameter(format!("rho = {rho} must be >= 2")));
    }
    if trials < 2 {
        return Err(DiagnosticsError::InvalidParameter("need at least 2 trials".into()));
    }
    let sides = burkholder_sides(model, partition, coefficients, p, trials, seed)?;
    let (l, r, ratio) = moment_ratio(&sides.left, &sides.right, rho)?;
    let half = trials / 2;
    let (_, _, half_ratio) = moment_ratio(&sides.left[..half], &sides.right[..half], rho)?;
    Ok(EstimateReport::new("burkholder", format!("rho={rho},p={p}"), trials, ratio, ceiling)
        .with_moments(vec![l, r])
        .with_detail("half_trial_ratio", half_ratio)
        .with_detail("doubling_change", relative_change(half_ratio, ratio)))
}

/// ‖max_j |B(t_j)|‖ moments of a scalar Brownian motion at the given times,
/// from an independent stream of Gaussian increments.
pub fn scalar_brownian_max_moment(
    times: &[f64],
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<MomentEstimate, DiagnosticsError> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiagnosticsError::InvalidParameter(
            "times must start at 0 and increase".into(),
        ));
    }
    let maxima: Vec<f64> = (0..trials as u64)
        .map(|trial| {
            let mut rng = substream(seed, "scalar-brownian-max", &[trial]);
            let mut b: f64 = 0.0;
            let mut best: f64 = 0.0;
            for w in times.windows(2) {
                let z: f64 = StandardNormal.sample(&mut rng);
                b += (w[1] - w[0]).sqrt() * z;
                best = best.max(b.abs());
            }
            best
        })
        .collect();
    Ok(MomentEstimate::from_samples(&maxima, rho)?)
}

/// sup over pairs s ≠ t of the sub-grid {i·stride/Q} of ‖W(t) - W(s)‖_p / |t - s|^α.
pub fn holder_constant(
    ensemble: &BrownianEnsemble,
    model: &NoiseModel,
    alpha: f64,
    p: f64,
    stride: usize,
) -> Result<f64, DiagnosticsError> {
    let q = ensemble.master_steps();
    if stride == 0 || !q.is_multiple_of(stride) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "stride {stride} must divide {q}"
        )));
    }
    let points: Vec<usize> = (0..=q).step_by(stride).collect();
    let fields: Vec<RealField> = points
        .iter()
        .map(|&i| model.combine(&ensemble.values_at_index(i)))
        .collect();
    let mut best: f64 = 0.0;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let dt = (points[b] - points[a]) as f64 / q as f64;
            let d = fields[b].sub(&fields[a])?.lp_norm(p)?;
            best = best.max(d / dt.powf(alpha));
        }
    }
    Ok(best)
}

/// Moments of the Hölder constant K_α of W in L^p_x over independent paths.
#[allow(clippy::too_many_arguments)]
pub fn check_kolmogorov(
    model: &NoiseModel,
    master_steps: usize,
    alpha: f64,
    p: f64,
    rho: f64,
    trials: usize,
    stride: usize,
    ceiling: f64,
    seed: u64,
) -> Result<EstimateReport, DiagnosticsError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "alpha = {alpha} must lie in (0, 1/2)"
        )));
    }
    let constants = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let e = BrownianEnsemble::generate(model.num_modes(), master_steps, seed, trial)?;
            holder_constant(&e, model, alpha, p, stride)
        })
        .collect::<Vec<Result<f64, DiagnosticsError>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let m = MomentEstimate::from_samples(&constants, rho)?;
    Ok(EstimateReport::new("kolmogorov", format!("alpha={alpha},p={p},rho={rho}"), trials, m.root, ceiling)
        .with_moments(vec![m]))
}
