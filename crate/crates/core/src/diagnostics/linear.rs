//! Exactly solvable linear model: with the Laplacian and the nonlinearity
//! off, u(1) = f·e^{-iW(1)} pathwise and E u(1) = f·e^{-V²/2}.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{DiagnosticsError, EstimateReport};
use crate::dynamics::{evolve, Records, SolverSpec};
use crate::grid::ComplexField;
use crate::noise::{BrownianEnsemble, NoiseModel};

/// Points with V² below this are outside the mode support.
const SUPPORT_FLOOR: f64 = 1e-6;
/// Absolute slack on the mean-field check where the sample spread vanishes.
const ABS_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNoiseOutcome {
    /// max over paths and x of |u(1,x) - f(x)e^{-iW(1,x)}|.
    pub exactness: EstimateReport,
    /// max over support points and real/imaginary parts of
    /// |mean - f·e^{-V²/2}| / stderr.
    pub mean_field: EstimateReport,
    pub sample_mean: ComplexField,
}

/// Solves the linear model on `paths` independent Brownian paths with the
/// master-resolution driver.
pub fn linear_noise_expectation_test(
    initial: &ComplexField,
    model: &NoiseModel,
    master_steps: usize,
    paths: usize,
    seed: u64,
) -> Result<LinearNoiseOutcome, DiagnosticsError> {
    if paths < 2 {
        return Err(DiagnosticsError::InvalidParameter("need at least 2 paths".into()));
    }
    let spec = SolverSpec::limit()
        .linear_test(false, false)
        .with_records(Records::Uniform(1));
    let finals = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let e = BrownianEnsemble::generate(model.num_modes(), master_steps, seed, p)?;
            let u = evolve(initial, model, &e, &spec)?.final_field().clone();
            let w = e.wiener_at(model, 1.0)?;
            let err = u
                .values()
                .iter()
                .zip(initial.values())
                .zip(w.values())
                .map(|((u, f), w)| (u - f * Complex64::from_polar(1.0, -w)).norm())
                .fold(0.0, f64::max);
            Ok((u, err))
        })
        .collect::<Vec<Result<(ComplexField, f64), DiagnosticsError>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let exact_err = finals.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let n = initial.grid().num_points();
    let m = paths as f64;
    let mut sum = vec![Complex64::new(0.0, 0.0); n];
    for (u, _) in &finals {
        for (s, v) in sum.iter_mut().zip(u.values()) {
            *s += v;
        }
    }
    let mean: Vec<Complex64> = sum.iter().map(|s| s / m).collect();
    let mut var_re = vec![0.0; n];
    let mut var_im = vec![0.0; n];
    for (u, _) in &finals {
        for i in 0..n {
            let d = u.values()[i] - mean[i];
            var_re[i] += d.re * d.re;
            var_im[i] += d.im * d.im;
        }
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..n {
        let v2 = model.v_squared().values()[i];
        if v2 < SUPPORT_FLOOR {
            continue;
        }
        let expect = initial.values()[i] * (-v2 / 2.0).exp();
        let parts = [
            (mean[i].re - expect.re, (var_re[i] / (m - 1.0) / m).sqrt()),
            (mean[i].im - expect.im, (var_im[i] / (m - 1.0) / m).sqrt()),
        ];
        for (err, se) in parts {
            let z = if err.abs() <= ABS_SLACK {
                0.0
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                (err.abs() - ABS_SLACK) / se
            };
            worst = worst.max(z);
            checked += 1;
        }
    }
    Ok(LinearNoiseOutcome {
        exactness: EstimateReport::new("linear_noise_exactness", format!("Q={master_steps}"), paths, exact_err, 1e-12),
        mean_field: EstimateReport::new("linear_noise_mean", format!("paths={paths}"), paths, worst, 4.0)
            .with_detail("support_checks", checked as f64),
        sample_mean: ComplexField::new(initial.grid().clone(), mean)?,
    })
}
