//! Hölder continuity of the free group in L² at the cost of H^α regularity.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiagnosticsError, EstimateReport};
use crate::grid::{ComplexField, RealField, SpatialGrid};
use crate::noise::substream;

fn check_alpha(alpha: f64) -> Result<(), DiagnosticsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DiagnosticsError::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Random complex Fourier coefficients on |ξ| ≤ `cutoff`, zero above.
pub fn random_band_limited<R: Rng>(grid: &Arc<SpatialGrid>, cutoff: f64, rng: &mut R) -> ComplexField {
    let mut spectrum: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .map(|k| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            if k.abs() <= cutoff {
                Complex64::new(re, im)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
    grid.inverse(&mut spectrum, &mut scratch);
    ComplexField::new(grid.clone(), spectrum).expect("finite by construction")
}

/// ‖e^{itΔ}ψ - ψ‖₂ / (t^{α/2}‖ψ‖_{H^α}); 0 at t = 0.
pub fn semigroup_ratio_a1(psi: &ComplexField, t: f64, alpha: f64) -> Result<f64, DiagnosticsError> {
    check_alpha(alpha)?;
    if !(t >= 0.0) {
        return Err(DiagnosticsError::InvalidParameter(format!("t = {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let num = psi.free_propagate(t).sub(psi)?.lp_norm(2.0)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / (t.powf(alpha / 2.0) * psi.h_alpha_norm(alpha)?))
}

/// ‖e^{i(τ₃-τ₂)Δ}(V e^{i(τ₂-τ₁)Δ}ψ) - Vψ‖₂ / ((τ₃-τ₁)^{α/2}‖ψ‖_{H^α}) for
/// τ₁ ≤ τ₂ ≤ τ₃.
pub fn semigroup_ratio_a2(
    psi: &ComplexField,
    potential: &RealField,
    taus: [f64; 3],
    alpha: f64,
) -> Result<f64, DiagnosticsError> {
    check_alpha(alpha)?;
    let [t1, t2, t3] = taus;
    if !(t1 <= t2 && t2 <= t3) {
        return Err(DiagnosticsError::InvalidParameter("need tau1 <= tau2 <= tau3".into()));
    }
    if t3 == t1 {
        return Ok(0.0);
    }
    let moved = psi.free_propagate(t2 - t1).mul_real(potential)?.free_propagate(t3 - t2);
    let num = moved.sub(&psi.mul_real(potential)?)?.lp_norm(2.0)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / ((t3 - t1).powf(alpha / 2.0) * psi.h_alpha_norm(alpha)?))
}

/// Worst free-group and sandwiched-potential ratios per α over random
/// band-limited ψ and random times, with V(x) = e^{-x²}.
pub fn check_semigroup_continuity(
    grid: &Arc<SpatialGrid>,
    alphas: &[f64],
    samples: usize,
    ceilings: (f64, f64),
    seed: u64,
) -> Result<Vec<EstimateReport>, DiagnosticsError> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let potential = RealField::from_fn(grid.clone(), |x| (-x * x).exp());
    let cutoff = (grid.num_points() as f64 / 8.0) * PI / grid.half_length();
    let mut a1 = vec![0.0f64; alphas.len()];
    let mut a2 = vec![0.0f64; alphas.len()];
    for s in 0..samples as u64 {
        let mut rng = substream(seed, "semigroup", &[s]);
        let psi = random_band_limited(grid, cutoff, &mut rng);
        let t: f64 = rng.gen_range(0.0..=1.0);
        let mut taus = [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)];
        taus.sort_by(f64::total_cmp);
        for (i, &alpha) in alphas.iter().enumerate() {
            a1[i] = a1[i].max(semigroup_ratio_a1(&psi, t, alpha)?);
            a2[i] = a2[i].max(semigroup_ratio_a2(&psi, &potential, taus, alpha)?);
        }
    }
    let mut reports = Vec::with_capacity(2 * alphas.len());
    for (i, &alpha) in alphas.iter().enumerate() {
        reports.push(EstimateReport::new("semigroup_a1", format!("alpha={alpha}"), samples, a1[i], ceilings.0));
        reports.push(EstimateReport::new("semigroup_a2", format!("alpha={alpha}"), samples, a2[i], ceilings.1));
    }
    Ok(reports)
}
