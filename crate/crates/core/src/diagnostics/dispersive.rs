//! Dispersive decay and Strichartz space-time bounds for e^{itΔ}.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::{DiagnosticsError, EstimateReport};
use crate::grid::{lp_of_moduli, ComplexField, SpatialGrid};
use crate::noise::substream;

const TAIL_LIMIT: f64 = 1e-10;

/// Hölder conjugate; 1 for p = ∞.
fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

fn fmt_exponent(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// Fraction of spectral energy at |ξ| above half the Nyquist wavenumber.
fn spectral_tail(f: &ComplexField) -> f64 {
    let spectrum = f.spectrum();
    let cut = f.grid().wavenumbers().iter().fold(0.0f64, |a, k| a.max(k.abs())) / 2.0;
    let (mut tail, mut total) = (0.0, 0.0);
    for (c, k) in spectrum.iter().zip(f.grid().wavenumbers()) {
        let e = c.norm_sqr();
        total += e;
        if k.abs() > cut {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

fn require_resolved(f: &ComplexField) -> Result<(), DiagnosticsError> {
    let tail = spectral_tail(f);
    if tail > TAIL_LIMIT {
        return Err(DiagnosticsError::Underresolved { tail });
    }
    Ok(())
}

/// Sum of one to three Gaussian wave packets, localized in |x| ≤ 3 with
/// widths in [0.8, 1.5] and frequencies in [-2, 2].
pub fn random_packet<R: Rng>(grid: &Arc<SpatialGrid>, rng: &mut R) -> ComplexField {
    let count = rng.gen_range(1..=3);
    let packets: Vec<(f64, f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.gen_range(0.5..2.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.8..1.5),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    ComplexField::from_fn(grid.clone(), |x| {
        packets
            .iter()
            .map(|&(a, c, w, k, phase)| {
                let z = (x - c) / w;
                Complex64::from_polar(a * (-z * z / 2.0).exp(), k * x + phase)
            })
            .sum()
    })
}

/// (4π)^{-(1/2 - 1/p)}: exact at p = 2 and p = ∞, Riesz–Thorin in between.
pub fn dispersive_ceiling(p: f64) -> f64 {
    let exponent = if p.is_infinite() { 0.5 } else { 0.5 - 1.0 / p };
    (4.0 * PI).powf(-exponent)
}

/// ‖e^{itΔ}f‖_p · t^{1/2 - 1/p} / ‖f‖_{p'}.
pub fn dispersive_ratio(f: &ComplexField, t: f64, p: f64) -> Result<f64, DiagnosticsError> {
    if !(p >= 2.0) {
        return Err(DiagnosticsError::InvalidParameter(format!("p = {p} must be >= 2")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!("t = {t} must be positive")));
    }
    require_resolved(f)?;
    let denom = f.lp_norm(conjugate(p))?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    let exponent = if p.is_infinite() { 0.5 } else { 0.5 - 1.0 / p };
    Ok(f.free_propagate(t).lp_norm(p)? * t.powf(exponent) / denom)
}

/// Worst dispersive ratio per exponent over random packets and t ∈ [0.01, 1].
pub fn check_dispersive(
    grid: &Arc<SpatialGrid>,
    samples: usize,
    p_list: &[f64],
    seed: u64,
) -> Result<Vec<EstimateReport>, DiagnosticsError> {
    if let Some(&bad) = p_list.iter().find(|p| !(**p >= 2.0)) {
        return Err(DiagnosticsError::InvalidParameter(format!("p = {bad} must be >= 2")));
    }
    let mut worst = vec![0.0f64; p_list.len()];
    for s in 0..samples as u64 {
        let mut rng = substream(seed, "dispersive", &[s]);
        let f = random_packet(grid, &mut rng);
        let t = rng.gen_range(0.01..=1.0);
        for (w, &p) in worst.iter_mut().zip(p_list) {
            *w = w.max(dispersive_ratio(&f, t, p)?);
        }
    }
    Ok(p_list
        .iter()
        .zip(worst)
        .map(|(&p, w)| {
            EstimateReport::new(
                "dispersive",
                format!("p={}", fmt_exponent(p)),
                samples,
                w,
                1.05 * dispersive_ceiling(p),
            )
        })
        .collect())
}

/// A one-dimensional admissible pair: 2/q + 1/r = 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrichartzPair {
    q: f64,
    r: f64,
}

impl StrichartzPair {
    pub const STANDARD: [(f64, f64); 4] = [(f64::INFINITY, 2.0), (5.0, 10.0), (6.0, 6.0), (8.0, 4.0)];

    pub fn new(q: f64, r: f64) -> Result<Self, DiagnosticsError> {
        let lhs = 2.0 / q + 1.0 / r;
        if !(q >= 4.0 && r >= 2.0) || (lhs - 0.5).abs() > 1e-12 {
            return Err(DiagnosticsError::NonAdmissible { q, r });
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn dual(&self) -> (f64, f64) {
        (conjugate(self.q), conjugate(self.r))
    }

    fn label(&self) -> String {
        format!("q={},r={}", fmt_exponent(self.q), fmt_exponent(self.r))
    }
}

/// L^q over [0, 1] of samples g(i/T), i = 0..=T, by the trapezoid rule
/// (maximum for q = ∞).
fn time_norm_trapezoid(g: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return g.iter().fold(0.0, |a, &b| a.max(b));
    }
    let h = 1.0 / (g.len() - 1) as f64;
    let s: f64 = g
        .windows(2)
        .map(|w| 0.5 * h * (w[0].powf(q) + w[1].powf(q)))
        .sum();
    s.powf(1.0 / q)
}

/// L^q over [0, 1] of samples g(i/T), i = 0..T-1, by the left rectangle rule.
fn time_norm_left(g: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return g.iter().fold(0.0, |a, &b| a.max(b));
    }
    let h = 1.0 / g.len() as f64;
    g.iter().map(|x| h * x.powf(q)).sum::<f64>().powf(1.0 / q)
}

fn check_time_samples(time_samples: usize) -> Result<(), DiagnosticsError> {
    if time_samples == 0 {
        return Err(DiagnosticsError::InvalidParameter("time_samples must be positive".into()));
    }
    Ok(())
}

/// ‖e^{itΔ}f‖_{L^q_t L^r_x(0,1)} / ‖f‖₂ on `time_samples` equal steps.
pub fn strichartz_homogeneous_ratio(
    f: &ComplexField,
    pair: StrichartzPair,
    time_samples: usize,
) -> Result<f64, DiagnosticsError> {
    check_time_samples(time_samples)?;
    let l2 = f.lp_norm(2.0)?;
    if l2 == 0.0 {
        return Ok(0.0);
    }
    let grid = f.grid();
    let mut scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
    let mut spectrum = f.values().to_vec();
    grid.forward(&mut spectrum, &mut scratch);
    let norms = (0..=time_samples)
        .map(|i| {
            let t = i as f64 / time_samples as f64;
            let mut buf: Vec<Complex64> = spectrum
                .iter()
                .zip(grid.free_multipliers(t))
                .map(|(c, m)| c * m)
                .collect();
            grid.inverse(&mut buf, &mut scratch);
            lp_of_moduli(buf.iter().map(|v| v.norm()), grid.dx(), pair.r)
        })
        .collect::<Vec<_>>();
    Ok(time_norm_trapezoid(&norms, pair.q) / l2)
}

/// ‖∫₀^t e^{i(t-s)Δ}σ(s) ds‖_{L^q_t L^r_x} / ‖σ‖_{L^{q'}_t L^{r'}_x} for the
/// same pair, with σ sampled at s_k = k/T, k = 0..T-1, and left-endpoint
/// Duhamel quadrature.
pub fn strichartz_inhomogeneous_ratio(
    source: &[ComplexField],
    pair: StrichartzPair,
) -> Result<f64, DiagnosticsError> {
    let steps = source.len();
    check_time_samples(steps)?;
    let grid = source[0].grid().clone();
    let h = 1.0 / steps as f64;
    let (q_dual, r_dual) = pair.dual();
    let mut rhs = Vec::with_capacity(steps);
    for s in source {
        if !s.grid().same_as(&grid) {
            return Err(crate::grid::GridError::GridMismatch.into());
        }
        rhs.push(s.lp_norm(r_dual)?);
    }
    let denom = time_norm_left(&rhs, q_dual);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
    // acc = Σ_{k<i} h·e^{-is_kΔ}σ(s_k) in Fourier space.
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.num_points()];
    let mut lhs = vec![0.0; steps + 1];
    for i in 1..=steps {
        let s = (i - 1) as f64 * h;
        let mut spec = source[i - 1].values().to_vec();
        grid.forward(&mut spec, &mut scratch);
        for ((a, c), m) in acc.iter_mut().zip(&spec).zip(grid.free_multipliers(-s)) {
            *a += c * m * h;
        }
        let t = i as f64 * h;
        let mut buf: Vec<Complex64> = acc
            .iter()
            .zip(grid.free_multipliers(t))
            .map(|(c, m)| c * m)
            .collect();
        grid.inverse(&mut buf, &mut scratch);
        lhs[i] = lp_of_moduli(buf.iter().map(|v| v.norm()), grid.dx(), pair.r);
    }
    Ok(time_norm_trapezoid(&lhs, pair.q) / denom)
}

/// Homogeneous and inhomogeneous Strichartz ratios over random packets and
/// random oscillating sources, one pair of reports per admissible pair.
pub fn check_strichartz(
    grid: &Arc<SpatialGrid>,
    pairs: &[StrichartzPair],
    samples: usize,
    time_samples: usize,
    ceiling: f64,
    seed: u64,
) -> Result<Vec<EstimateReport>, DiagnosticsError> {
    check_time_samples(time_samples)?;
    let mut hom = vec![0.0f64; pairs.len()];
    let mut inhom = vec![0.0f64; pairs.len()];
    for s in 0..samples as u64 {
        let mut rng = substream(seed, "strichartz", &[s]);
        let f = random_packet(grid, &mut rng);
        require_resolved(&f)?;
        let g = random_packet(grid, &mut rng);
        require_resolved(&g)?;
        let omega = rng.gen_range(0.0..4.0 * PI);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let source: Vec<ComplexField> = (0..time_samples)
            .map(|k| {
                let t = k as f64 / time_samples as f64;
                g.scale(Complex64::new((omega * t + phase).cos(), 0.0))
            })
            .collect();
        for (i, &pair) in pairs.iter().enumerate() {
            hom[i] = hom[i].max(strichartz_homogeneous_ratio(&f, pair, time_samples)?);
            inhom[i] = inhom[i].max(strichartz_inhomogeneous_ratio(&source, pair)?);
        }
    }
    let mut reports = Vec::with_capacity(2 * pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        reports.push(EstimateReport::new("strichartz_homogeneous", pair.label(), samples, hom[i], ceiling));
        reports.push(EstimateReport::new("strichartz_inhomogeneous", pair.label(), samples, inhom[i], ceiling));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: &Arc<SpatialGrid>) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |x| Complex64::new((-x * x / 2.0).exp(), 0.0))
    }

    #[test]
    fn gaussian_sup_ratio_matches_closed_form() {
        // |e^{iΔ}e^{-x²/2}| peaks at 5^{-1/4}; ‖e^{-x²/2}‖₁ = √(2π).
        let g = SpatialGrid::new(1024, 16.0).unwrap();
        let ratio = dispersive_ratio(&gaussian(&g), 1.0, f64::INFINITY).unwrap();
        let expect = 5f64.powf(-0.25) / (2.0 * PI).sqrt();
        assert!((ratio - expect).abs() < 1e-8, "{ratio} vs {expect}");
        assert!(ratio <= 1.05 * dispersive_ceiling(f64::INFINITY));
    }

    #[test]
    fn p2_ratio_is_one_and_scale_free() {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        let mut rng = substream(1, "test", &[]);
        let f = random_packet(&g, &mut rng);
        let r = dispersive_ratio(&f, 0.3, 2.0).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r6 = dispersive_ratio(&f, 0.3, 6.0).unwrap();
        let r6_scaled = dispersive_ratio(&f.scale(Complex64::new(5.0, 0.0)), 0.3, 6.0).unwrap();
        assert!((r6 - r6_scaled).abs() < 1e-12 * r6);
    }

    #[test]
    fn underresolved_input_rejected() {
        let g = SpatialGrid::new(64, 16.0).unwrap();
        let spike = ComplexField::from_fn(g, |x| Complex64::new(if x == 0.0 { 1.0 } else { 0.0 }, 0.0));
        assert!(matches!(
            dispersive_ratio(&spike, 0.5, 4.0),
            Err(DiagnosticsError::Underresolved { .. })
        ));
        assert!(dispersive_ratio(&spike, 0.5, 1.5).is_err());
    }

    #[test]
    fn admissibility() {
        for (q, r) in StrichartzPair::STANDARD {
            StrichartzPair::new(q, r).unwrap();
        }
        assert!(StrichartzPair::new(4.0, 4.0).is_err());
        assert!(StrichartzPair::new(6.0, 8.0).is_err());
        assert!(StrichartzPair::new(2.0, f64::INFINITY).is_err());
        assert_eq!(StrichartzPair::new(5.0, 10.0).unwrap().dual(), (1.25, 10.0 / 9.0));
    }

    #[test]
    fn energy_pair_is_unitary() {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        let pair = StrichartzPair::new(f64::INFINITY, 2.0).unwrap();
        let mut rng = substream(2, "test", &[]);
        let f = random_packet(&g, &mut rng);
        let r = strichartz_homogeneous_ratio(&f, pair, 32).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_source_gives_zero() {
        let g = SpatialGrid::new(64, 16.0).unwrap();
        let pair = StrichartzPair::new(6.0, 6.0).unwrap();
        let source = vec![ComplexField::zeros(g); 8];
        assert_eq!(strichartz_inhomogeneous_ratio(&source, pair).unwrap(), 0.0);
    }

    #[test]
    fn energy_pair_inhomogeneous_obeys_minkowski() {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        let pair = StrichartzPair::new(f64::INFINITY, 2.0).unwrap();
        let mut rng = substream(3, "test", &[]);
        let base = random_packet(&g, &mut rng);
        let source: Vec<ComplexField> = (0..32)
            .map(|k| base.scale(Complex64::new((k as f64).cos(), 0.0)))
            .collect();
        let r = strichartz_inhomogeneous_ratio(&source, pair).unwrap();
        assert!(r > 0.0 && r <= 1.0 + 1e-12, "{r}");
    }

    #[test]
    fn gaussian_510_ratio_stable_under_refinement() {
        let pair = StrichartzPair::new(5.0, 10.0).unwrap();
        let coarse = strichartz_homogeneous_ratio(&gaussian(&SpatialGrid::new(256, 16.0).unwrap()), pair, 64).unwrap();
        let fine = strichartz_homogeneous_ratio(&gaussian(&SpatialGrid::new(512, 16.0).unwrap()), pair, 128).unwrap();
        assert!(coarse.is_finite() && coarse > 0.0);
        assert!((fine - coarse).abs() <= 0.1 * coarse, "{coarse} vs {fine}");
    }
}
