//! Space-time norms on trajectories: X₁ = L^∞_t L²_x, X₂ = L⁵_t L¹⁰_x and
//! X = X₁ ∩ X₂ (normed by the sum), over subintervals of the record grid.

use thiserror::Error;

use crate::dynamics::Trajectory;

const ENDPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SpacetimeError {
    #[error("interval [{a}, {b}] must satisfy 0 <= a < b <= 1")]
    InvalidInterval { a: f64, b: f64 },
    #[error("endpoint {0} is not a record time of the trajectory")]
    OffRecordGrid(f64),
    #[error("trajectories are sampled at different times")]
    SampleMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval {
    a: f64,
    b: f64,
}

impl TimeInterval {
    pub fn new(a: f64, b: f64) -> Result<Self, SpacetimeError> {
        if !(a >= 0.0 && a < b && b <= 1.0) {
            return Err(SpacetimeError::InvalidInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }
}

fn locate(times: &[f64], t: f64) -> Result<usize, SpacetimeError> {
    let i = times.partition_point(|&s| s < t - ENDPOINT_TOL);
    match times.get(i) {
        Some(&s) if (s - t).abs() <= ENDPOINT_TOL => Ok(i),
        _ => Err(SpacetimeError::OffRecordGrid(t)),
    }
}

/// Index range [i, j] of the record samples spanning `interval`.
pub fn sample_range(
    traj: &Trajectory,
    interval: TimeInterval,
) -> Result<(usize, usize), SpacetimeError> {
    let times = traj.times();
    Ok((locate(times, interval.a)?, locate(times, interval.b)?))
}

/// max over record times in I of ‖u(t)‖₂.
pub fn x1_norm(traj: &Trajectory, interval: TimeInterval) -> Result<f64, SpacetimeError> {
    let (i, j) = sample_range(traj, interval)?;
    Ok(traj.fields()[i..=j]
        .iter()
        .map(|f| f.lp_norm(2.0).expect("valid exponent"))
        .fold(0.0, f64::max))
}

/// (∫_I ‖u(t)‖⁵_{L¹⁰} dt)^{1/5}, trapezoid rule on the fifth powers.
pub fn x2_norm(traj: &Trajectory, interval: TimeInterval) -> Result<f64, SpacetimeError> {
    Ok(x2_fifth_power(traj, interval)?.powf(0.2))
}

/// ∫_I ‖u(t)‖⁵_{L¹⁰} dt; additive over adjacent intervals.
pub fn x2_fifth_power(traj: &Trajectory, interval: TimeInterval) -> Result<f64, SpacetimeError> {
    let (i, j) = sample_range(traj, interval)?;
    let times = traj.times();
    let g: Vec<f64> = traj.fields()[i..=j]
        .iter()
        .map(|f| f.lp_norm(10.0).expect("valid exponent").powi(5))
        .collect();
    Ok(trapezoid(&times[i..=j], &g))
}

fn trapezoid(t: &[f64], g: &[f64]) -> f64 {
    t.windows(2)
        .zip(g.windows(2))
        .map(|(tw, gw)| 0.5 * (tw[1] - tw[0]) * (gw[0] + gw[1]))
        .sum()
}

pub fn x_norm(traj: &Trajectory, interval: TimeInterval) -> Result<f64, SpacetimeError> {
    Ok(x1_norm(traj, interval)? + x2_norm(traj, interval)?)
}

/// Both components of the X norm in one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XNorms {
    pub x1: f64,
    pub x2: f64,
}

impl XNorms {
    pub fn total(&self) -> f64 {
        self.x1 + self.x2
    }
}

pub fn x_norms(traj: &Trajectory, interval: TimeInterval) -> Result<XNorms, SpacetimeError> {
    Ok(XNorms {
        x1: x1_norm(traj, interval)?,
        x2: x2_norm(traj, interval)?,
    })
}

/// X norms of a − b over [0,1] without materializing the difference.
pub fn difference_norms(a: &Trajectory, b: &Trajectory) -> Result<XNorms, SpacetimeError> {
    if a.times() != b.times() {
        return Err(SpacetimeError::SampleMismatch);
    }
    let mut x1: f64 = 0.0;
    let mut g = Vec::with_capacity(a.len());
    for (fa, fb) in a.fields().iter().zip(b.fields()) {
        let mut l2 = 0.0;
        let mut l10 = 0.0;
        for (u, v) in fa.values().iter().zip(fb.values()) {
            let d = (u - v).norm_sqr();
            l2 += d;
            l10 += d.powi(5);
        }
        let dx = fa.grid().dx();
        x1 = x1.max((l2 * dx).sqrt());
        g.push((l10 * dx).sqrt());
    }
    Ok(XNorms {
        x1,
        x2: trapezoid(a.times(), &g).powf(0.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ComplexField, SpatialGrid};
    use num_complex::Complex64;

    fn constant_traj(c: f64, samples: usize) -> Trajectory {
        let g = SpatialGrid::new(32, 4.0).unwrap();
        let times: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
        let f = ComplexField::from_fn(g, |x| Complex64::new(c * (-x * x).exp(), 0.0));
        Trajectory::from_fields(times.clone(), vec![f; samples + 1])
    }

    #[test]
    fn interval_validation() {
        assert!(TimeInterval::new(0.5, 0.5).is_err());
        assert!(TimeInterval::new(-0.1, 0.5).is_err());
        assert!(TimeInterval::new(0.2, 1.1).is_err());
        let tr = constant_traj(1.0, 4);
        let off = TimeInterval::new(0.1, 0.5).unwrap();
        assert_eq!(x1_norm(&tr, off), Err(SpacetimeError::OffRecordGrid(0.1)));
    }

    #[test]
    fn zero_trajectory() {
        let tr = constant_traj(0.0, 4);
        let i = TimeInterval::unit();
        assert_eq!(x1_norm(&tr, i).unwrap(), 0.0);
        assert_eq!(x2_norm(&tr, i).unwrap(), 0.0);
        assert_eq!(x_norm(&tr, i).unwrap(), 0.0);
    }

    #[test]
    fn constant_in_time() {
        let tr = constant_traj(1.3, 8);
        let f = &tr.fields()[0];
        let i = TimeInterval::unit();
        assert!((x2_norm(&tr, i).unwrap() - f.lp_norm(10.0).unwrap()).abs() < 1e-14);
        assert!((x1_norm(&tr, i).unwrap() - f.lp_norm(2.0).unwrap()).abs() < 1e-14);
        assert_eq!(
            x_norm(&tr, i).unwrap(),
            x1_norm(&tr, i).unwrap() + x2_norm(&tr, i).unwrap()
        );
    }

    #[test]
    fn homogeneity() {
        let tr = constant_traj(0.8, 4);
        let i = TimeInterval::new(0.25, 0.75).unwrap();
        let scaled = tr.scaled(3.0);
        assert!((x1_norm(&scaled, i).unwrap() - 3.0 * x1_norm(&tr, i).unwrap()).abs() < 1e-13);
        assert!((x2_norm(&scaled, i).unwrap() - 3.0 * x2_norm(&tr, i).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn difference_norms_match_materialized() {
        let a = constant_traj(1.0, 4);
        let b = constant_traj(0.25, 4);
        let d = a.difference(&b).unwrap();
        let direct = x_norms(&d, TimeInterval::unit()).unwrap();
        let fused = difference_norms(&a, &b).unwrap();
        assert!((direct.x1 - fused.x1).abs() < 1e-14);
        assert!((direct.x2 - fused.x2).abs() < 1e-14);
    }
}
