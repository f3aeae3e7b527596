//! Periodic spatial discretization of the line, complex and real fields on it,
//! discrete L^p / H^α norms and the free Schrödinger group e^{itΔ}.
//!
//! The line is replaced by the torus [-L, L) with `num_points` equispaced
//! nodes. Transforms use an unnormalized forward DFT; `inverse` divides by N.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid size {0} must be a power of two and at least 8")]
    InvalidSize(usize),
    #[error("half length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("L^p exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("Sobolev order must lie in [0, 1], got {0}")]
    InvalidSobolevOrder(f64),
    #[error("field has {got} values but the grid has {expected} points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value in field")]
    NonFinite,
}

/// Uniform periodic grid on [-L, L).
pub struct SpatialGrid {
    num_points: usize,
    half_length: f64,
    dx: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("num_points", &self.num_points)
            .field("half_length", &self.half_length)
            .finish()
    }
}

impl SpatialGrid {
    pub fn new(num_points: usize, half_length: f64) -> Result<Arc<Self>, GridError> {
        if num_points < 8 || !num_points.is_power_of_two() {
            return Err(GridError::InvalidSize(num_points));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(GridError::InvalidLength(half_length));
        }
        let dx = 2.0 * half_length / num_points as f64;
        let nodes = (0..num_points).map(|i| -half_length + i as f64 * dx).collect();
        let dk = PI / half_length;
        let wavenumbers = (0..num_points)
            .map(|k| {
                let signed = if k < num_points / 2 {
                    k as i64
                } else {
                    k as i64 - num_points as i64
                };
                signed as f64 * dk
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(num_points);
        let inverse = planner.plan_fft_inverse(num_points);
        Ok(Arc::new(Self {
            num_points,
            half_length,
            dx,
            nodes,
            wavenumbers,
            forward,
            inverse,
        }))
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node positions x_i = -L + i·dx.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Angular frequencies in FFT order (0, 1, …, N/2-1, -N/2, …, -1)·π/L.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, scratch);
    }

    /// Inverse DFT in place, including the 1/N factor.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, scratch);
        let scale = 1.0 / self.num_points as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Fourier multipliers e^{-iξ²t} of the free group at time `t`.
    pub fn free_multipliers(&self, t: f64) -> Vec<Complex64> {
        self.wavenumbers
            .iter()
            .map(|&k| Complex64::from_polar(1.0, -k * k * t))
            .collect()
    }

    pub fn same_as(&self, other: &SpatialGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.num_points == other.num_points && self.half_length == other.half_length)
    }
}

fn check_exponent(p: f64) -> Result<(), GridError> {
    if p.is_nan() || p < 1.0 {
        Err(GridError::InvalidExponent(p))
    } else {
        Ok(())
    }
}

/// Discrete L^p norm of a sequence of moduli with rectangle-rule weight `dx`.
pub(crate) fn lp_of_moduli<I: Iterator<Item = f64>>(moduli: I, dx: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return moduli.fold(0.0, f64::max);
    }
    let sum: f64 = if p == 2.0 {
        moduli.map(|a| a * a).sum()
    } else if p.fract() == 0.0 && p <= 32.0 {
        let k = p as i32;
        moduli.map(|a| a.powi(k)).sum()
    } else {
        moduli.map(|a| a.powf(p)).sum()
    };
    (sum * dx).powf(1.0 / p)
}

/// A complex amplitude at every node of a grid.
#[derive(Clone)]
pub struct ComplexField {
    grid: Arc<SpatialGrid>,
    values: Vec<Complex64>,
}

impl fmt::Debug for ComplexField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexField")
            .field("grid", &self.grid)
            .field("len", &self.values.len())
            .finish()
    }
}

impl PartialEq for ComplexField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.values == other.values
    }
}

impl ComplexField {
    pub fn new(grid: Arc<SpatialGrid>, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.num_points() {
            return Err(GridError::LengthMismatch {
                expected: grid.num_points(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<SpatialGrid>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_points());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<SpatialGrid>) -> Self {
        let n = grid.num_points();
        Self::from_raw(grid, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_fn(grid: Arc<SpatialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64, GridError> {
        check_exponent(p)?;
        Ok(lp_of_moduli(
            self.values.iter().map(|v| v.norm()),
            self.grid.dx(),
            p,
        ))
    }

    /// Squared L² norm (the mass).
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Discrete Fourier coefficients (unnormalized).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut buf = self.values.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.grid.scratch_len()];
        self.grid.forward(&mut buf, &mut scratch);
        buf
    }

    /// ‖f‖²₂ computed on the Fourier side.
    pub fn spectral_energy(&self) -> f64 {
        let n = self.grid.num_points() as f64;
        self.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx() / n
    }

    /// Bessel-potential norm ‖(1+ξ²)^{α/2} f̂‖ with Plancherel normalization.
    pub fn h_alpha_norm(&self, alpha: f64) -> Result<f64, GridError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(GridError::InvalidSobolevOrder(alpha));
        }
        if alpha == 0.0 {
            return self.lp_norm(2.0);
        }
        let n = self.grid.num_points() as f64;
        let energy: f64 = self
            .spectrum()
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(c, &k)| (1.0 + k * k).powf(alpha) * c.norm_sqr())
            .sum();
        Ok((energy * self.grid.dx() / n).sqrt())
    }

    /// e^{itΔ}f, i.e. the inverse transform of e^{-iξ²t}·f̂.
    pub fn free_propagate(&self, t: f64) -> ComplexField {
        let mut buf = self.values.clone();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.grid.scratch_len()];
        self.grid.forward(&mut buf, &mut scratch);
        for (c, &k) in buf.iter_mut().zip(self.grid.wavenumbers()) {
            *c *= Complex64::from_polar(1.0, -k * k * t);
        }
        self.grid.inverse(&mut buf, &mut scratch);
        Self::from_raw(self.grid.clone(), buf)
    }

    pub fn scale(&self, factor: Complex64) -> ComplexField {
        Self::from_raw(
            self.grid.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField, GridError> {
        if !self.grid.same_as(&other.grid) {
            return Err(GridError::GridMismatch);
        }
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField, GridError> {
        if !self.grid.same_as(&other.grid) {
            return Err(GridError::GridMismatch);
        }
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    /// Pointwise product with a real field.
    pub fn mul_real(&self, other: &RealField) -> Result<ComplexField, GridError> {
        if !self.grid.same_as(other.grid()) {
            return Err(GridError::GridMismatch);
        }
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(other.values())
                .map(|(a, &b)| a * b)
                .collect(),
        ))
    }
}

/// A real value at every node of a grid; noise modes and Wiener fields.
#[derive(Clone)]
pub struct RealField {
    grid: Arc<SpatialGrid>,
    values: Vec<f64>,
}

impl fmt::Debug for RealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealField")
            .field("grid", &self.grid)
            .field("len", &self.values.len())
            .finish()
    }
}

impl RealField {
    pub fn new(grid: Arc<SpatialGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.num_points() {
            return Err(GridError::LengthMismatch {
                expected: grid.num_points(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<SpatialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_points());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<SpatialGrid>) -> Self {
        let n = grid.num_points();
        Self::from_raw(grid, vec![0.0; n])
    }

    pub fn from_fn(grid: Arc<SpatialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64, GridError> {
        check_exponent(p)?;
        Ok(lp_of_moduli(
            self.values.iter().map(|v| v.abs()),
            self.grid.dx(),
            p,
        ))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField::from_raw(
            self.grid.clone(),
            self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField, GridError> {
        if !self.grid.same_as(&other.grid) {
            return Err(GridError::GridMismatch);
        }
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// `self + factor·other`, the building block of Wiener field sums.
    pub fn axpy(&mut self, factor: f64, other: &RealField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn gaussian(grid: &Arc<SpatialGrid>) -> ComplexField {
        ComplexField::from_fn(grid.clone(), |x| Complex64::new((-x * x / 2.0).exp(), 0.0))
    }

    // closed form of e^{itΔ}e^{-x²/2} for i∂_t u + ∂_x²u = 0
    fn gaussian_oracle(t: f64, x: f64) -> Complex64 {
        let d = Complex64::new(1.0, 2.0 * t);
        (-x * x / (2.0 * d)).exp() / d.sqrt()
    }

    #[test]
    fn rejects_bad_sizes() {
        assert_eq!(SpatialGrid::new(4, 1.0).unwrap_err(), GridError::InvalidSize(4));
        assert_eq!(SpatialGrid::new(100, 1.0).unwrap_err(), GridError::InvalidSize(100));
        assert!(SpatialGrid::new(64, 0.0).is_err());
        assert!(SpatialGrid::new(64, f64::NAN).is_err());
    }

    #[test]
    fn grid_geometry() {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        assert!((g.dx() * 256.0 - 32.0).abs() <= f64::EPSILON * 32.0);
        let ks = g.wavenumbers();
        for &k in ks.iter().filter(|&&k| k > 0.0) {
            assert!(ks.iter().any(|&q| q == -k));
        }
        assert_eq!(g.nodes()[0], -16.0);
    }

    #[test]
    fn norms_of_zero_and_constant() {
        let g = SpatialGrid::new(64, 3.0).unwrap();
        let z = ComplexField::zeros(g.clone());
        for p in [1.0, 2.0, 2.5, 10.0, f64::INFINITY] {
            assert_eq!(z.lp_norm(p).unwrap(), 0.0);
        }
        let c = ComplexField::from_fn(g, |_| Complex64::new(0.0, -1.5));
        assert!(rel(c.lp_norm(2.0).unwrap(), 1.5 * 6f64.sqrt()) < 1e-14);
        assert_eq!(c.lp_norm(f64::INFINITY).unwrap(), 1.5);
    }

    #[test]
    fn rejects_small_exponent() {
        let g = SpatialGrid::new(16, 1.0).unwrap();
        let z = ComplexField::zeros(g);
        assert!(matches!(z.lp_norm(0.5), Err(GridError::InvalidExponent(_))));
        assert!(z.lp_norm(f64::NAN).is_err());
    }

    #[test]
    fn gaussian_l2_norm() {
        let g = SpatialGrid::new(2048, 16.0).unwrap();
        let f = gaussian(&g);
        assert!((f.lp_norm(2.0).unwrap() - PI.powf(0.25)).abs() < 1e-10);
    }

    #[test]
    fn h_alpha_cases() {
        let g = SpatialGrid::new(2048, 16.0).unwrap();
        let f = gaussian(&g);
        assert!(rel(f.h_alpha_norm(0.0).unwrap(), f.lp_norm(2.0).unwrap()) < 1e-12);
        assert_eq!(ComplexField::zeros(g.clone()).h_alpha_norm(1.0).unwrap(), 0.0);
        assert!(f.h_alpha_norm(1.5).is_err());
        assert!(f.h_alpha_norm(-0.1).is_err());

        let xi0 = g.wavenumbers()[7];
        let mode = ComplexField::from_fn(g.clone(), |x| Complex64::from_polar(1.0, xi0 * x));
        let expect = (2.0 * g.half_length()).sqrt() * (1.0 + xi0 * xi0).sqrt();
        assert!((mode.h_alpha_norm(1.0).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn propagator_identity_and_inverse() {
        let g = SpatialGrid::new(512, 16.0).unwrap();
        let f = ComplexField::from_fn(g, |x| {
            Complex64::from_polar((-(x - 1.0) * (x - 1.0)).exp(), 0.7 * x)
        });
        let same = f.free_propagate(0.0);
        let dev = same
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev <= 1e-14);
        let back = f.free_propagate(0.3).free_propagate(-0.3);
        let err = back.sub(&f).unwrap().lp_norm(2.0).unwrap();
        assert!(err <= 1e-12 * f.lp_norm(2.0).unwrap());
    }

    #[test]
    fn propagator_matches_closed_form_gaussian() {
        let g = SpatialGrid::new(2048, 16.0).unwrap();
        let f = gaussian(&g);
        for t in [0.1, 0.5, 1.0] {
            let u = f.free_propagate(t);
            let err = u
                .values()
                .iter()
                .zip(g.nodes())
                .map(|(v, &x)| (v - gaussian_oracle(t, x)).norm())
                .fold(0.0, f64::max);
            assert!(err <= 1e-8, "t={t} err={err}");
        }
    }

    #[test]
    fn parseval() {
        let g = SpatialGrid::new(128, 5.0).unwrap();
        let f = ComplexField::from_fn(g, |x| Complex64::new(x.sin() * (-x * x).exp(), x.cos()));
        assert!(rel(f.spectral_energy(), f.mass()) < 1e-12);
    }
}
