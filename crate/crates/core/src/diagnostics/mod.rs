//! Numerical checks of the estimate machinery behind the uniform bounds:
//! dispersive and Strichartz inequalities, discrete Burkholder and
//! Kolmogorov–Hölder moments, the source-term maximal functions with the
//! η-budget interval classification, the crude per-interval bound, the
//! linear-noise Itô correction and semigroup continuity.

mod dispersive;
mod linear;
mod martingale;
mod semigroup;
mod source;
mod suite;

use std::io::{self, Write};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::experiments::{fmt_float, ExperimentError, MomentEstimate};
use crate::grid::GridError;
use crate::noise::NoiseError;
use crate::spacetime::SpacetimeError;

pub use dispersive::{
    check_dispersive, check_strichartz, dispersive_ceiling, dispersive_ratio, random_packet,
    strichartz_homogeneous_ratio, strichartz_inhomogeneous_ratio, StrichartzPair,
};
pub use linear::{linear_noise_expectation_test, LinearNoiseOutcome};
pub use martingale::{
    burkholder_sides, check_discrete_burkholder, check_kolmogorov, holder_constant,
    scalar_brownian_max_moment, AdaptedCoefficients, BurkholderSides, ConstantCoefficient,
    DecayingFeedback,
};
pub use semigroup::{
    check_semigroup_continuity, random_band_limited, semigroup_ratio_a1, semigroup_ratio_a2,
};
pub use source::{
    classify_intervals, crude_interval_bound, crude_interval_ratios, source_maximal_functions,
    BSubtype, IntervalClassification, SourceMaximal, TypeBInterval,
};
pub use suite::{
    burkholder_oracle_report, crude_bound_reports, run_estimate_suite, source_reports,
    DiagnosticsConfig, SourceRow, SourceStudy,
};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input is underresolved: relative spectral tail {tail:.3e} exceeds 1e-10")]
    Underresolved { tail: f64 },
    #[error("({q}, {r}) is not an admissible pair: need 2/q + 1/r = 1/2, q >= 4, r >= 2")]
    NonAdmissible { q: f64, r: f64 },
    #[error("coefficient generator is not adapted")]
    NonAdapted,
    #[error("insufficient record density: {0}")]
    InsufficientRecords(String),
    #[error("alpha = {0} must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spacetime(#[from] SpacetimeError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

/// Outcome of one estimate check: the worst observed (left side)/(right side)
/// against a ceiling.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub name: String,
    pub param: String,
    pub samples: usize,
    pub worst_ratio: f64,
    pub ceiling: f64,
    pub pass: bool,
    pub moments: Vec<MomentEstimate>,
    /// Auxiliary named values (half-sample ratios, oracle values, ...).
    pub details: Vec<(String, f64)>,
}

impl EstimateReport {
    /// `pass` is `worst_ratio <= ceiling`; a NaN ratio fails.
    pub fn new(
        name: impl Into<String>,
        param: impl Into<String>,
        samples: usize,
        worst_ratio: f64,
        ceiling: f64,
    ) -> Self {
        Self {
            name: name.into(),
            param: param.into(),
            samples,
            worst_ratio,
            ceiling,
            pass: worst_ratio <= ceiling,
            moments: Vec::new(),
            details: Vec::new(),
        }
    }

    pub fn with_moments(mut self, moments: Vec<MomentEstimate>) -> Self {
        self.moments = moments;
        self
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.push((key.into(), value));
        self
    }

    pub fn detail(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn csv_header() -> &'static str {
        "check,param,worst_ratio,ceiling,pass,rho,moment_mean,moment_stderr,root,paths"
    }

    /// Summary row followed by one row per moment estimate.
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},,,,,{}",
            self.name,
            self.param,
            fmt_float(self.worst_ratio),
            fmt_float(self.ceiling),
            self.pass,
            self.samples
        )?;
        for m in &self.moments {
            writeln!(
                out,
                "{},{},,,,{},{},{},{},{}",
                self.name,
                self.param,
                fmt_float(m.rho),
                fmt_float(m.mean),
                fmt_float(m.stderr),
                fmt_float(m.root),
                m.paths
            )?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::csv_header())?;
        self.write_csv_rows(out)
    }
}

/// Largest |b - a|/|a| over consecutive pairs; 0 when both vanish.
pub(crate) fn max_relative_step(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| relative_change(w[0], w[1]))
        .fold(0.0, f64::max)
}

pub(crate) fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_pass_flag() {
        assert!(EstimateReport::new("x", "", 1, 1.0, 1.0).pass);
        assert!(!EstimateReport::new("x", "", 1, 1.0 + 1e-15, 1.0).pass);
        assert!(!EstimateReport::new("x", "", 1, f64::NAN, 1.0).pass);
    }

    #[test]
    fn report_csv_shape() {
        let m = MomentEstimate::from_samples(&[1.0, 2.0], 2.0).unwrap();
        let r = EstimateReport::new("burkholder", "rho=2", 2, 0.5, 1.0).with_moments(vec![m]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let width = lines[0].split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == width));
        assert!(lines[1].starts_with("burkholder,rho=2,5.0000000000000000e-1,1.0000000000000000e0,true"));
    }

    #[test]
    fn relative_steps() {
        assert!((max_relative_step(&[1.0, 1.1, 0.99]) - 0.11 / 1.1).abs() < 1e-12);
        assert_eq!(max_relative_step(&[0.0, 0.0]), 0.0);
        assert_eq!(max_relative_step(&[2.0]), 0.0);
    }
}
