//! Split-step evolution of the quintic defocusing NLS driven by a
//! piecewise-linear (Wong–Zakai) noise, by the master-resolution driver, or
//! by nothing at all.
//!
//! Every internal step of length δ is a Strang composition
//!
//! ```text
//! e^{i(δ/2)Δ} ∘ [u ↦ u·exp(-iδ(φ_m(‖u‖_{X₂(0,s)})|u|⁴ + G))] ∘ e^{i(δ/2)Δ}
//! ```
//!
//! where `G` is the slope of the driver on the current partition interval.
//! Each factor is either unitary or a pointwise unimodular multiplier, so the
//! discrete mass is conserved up to roundoff.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{ComplexField, GridError, SpatialGrid};
use crate::noise::{substream, BrownianEnsemble, NoiseError, NoiseModel, Partition};

/// Default ceiling on ‖u‖_∞ before a path is declared broken.
pub const DEFAULT_CEILING: f64 = 1e3;
/// Default number of uniformly spaced record intervals on [0, 1].
pub const DEFAULT_RECORDS: usize = 256;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("truncation threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("cutoff evaluated at negative radius {0}")]
    NegativeRadius(f64),
    #[error("record times invalid: {0}")]
    InvalidRecords(String),
    #[error("substep count must be positive")]
    InvalidSubsteps,
    #[error("initial data and noise model live on different grids")]
    GridMismatch,
    #[error("sup norm {sup:.3e} exceeded ceiling {ceiling:.3e} at t = {time}")]
    BlowUp { time: f64, sup: f64, ceiling: f64 },
    #[error("non-finite value in the solution at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// 𝒩(v) = |v|⁴v.
pub fn nonlinearity(field: &ComplexField) -> ComplexField {
    let values = field
        .values()
        .iter()
        .map(|v| v * v.norm_sqr().powi(2))
        .collect();
    ComplexField::from_raw(field.grid().clone(), values)
}

fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth cutoff: 1 on [0,1], 0 on [2,∞), a C^∞ bridge in between.
pub fn cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let a = psi(2.0 - r);
    a / (a + psi(r - 1.0))
}

/// Truncation threshold m for φ_m(r) = φ(r/m); `None` disables truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TruncationSpec {
    threshold: Option<f64>,
}

impl TruncationSpec {
    pub fn none() -> Self {
        Self { threshold: None }
    }

    /// `f64::INFINITY` means no truncation.
    pub fn at(m: f64) -> Result<Self, DynamicsError> {
        if m.is_infinite() && m > 0.0 {
            return Ok(Self::none());
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(DynamicsError::InvalidThreshold(m));
        }
        Ok(Self { threshold: Some(m) })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(f64::INFINITY)
    }

    /// φ_m(r).
    pub fn phi(&self, r: f64) -> Result<f64, DynamicsError> {
        if r.is_nan() || r < 0.0 {
            return Err(DynamicsError::NegativeRadius(r));
        }
        Ok(match self.threshold {
            None => 1.0,
            Some(m) => cutoff(r / m),
        })
    }
}

/// Which noise drives the equation.
#[derive(Debug, Clone, PartialEq)]
pub enum DriverKind {
    /// Piecewise-linear interpolation of W on a partition.
    WongZakai(Partition),
    /// Master-resolution driver; the surrogate for the Stratonovich limit.
    Limit,
    /// No noise.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    /// `count` equal intervals, so `count + 1` samples including t = 0 and 1.
    Uniform(usize),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub driver: DriverKind,
    pub laplacian: bool,
    pub nonlinearity: bool,
    pub truncation: TruncationSpec,
    /// Internal steps per master step; δ = 1/(Q·substeps).
    pub substeps: usize,
    pub records: Records,
    pub ceiling: f64,
}

impl SolverSpec {
    pub fn new(driver: DriverKind) -> Self {
        Self {
            driver,
            laplacian: true,
            nonlinearity: true,
            truncation: TruncationSpec::none(),
            substeps: 1,
            records: Records::Uniform(DEFAULT_RECORDS),
            ceiling: DEFAULT_CEILING,
        }
    }

    pub fn wong_zakai(partition: Partition) -> Self {
        Self::new(DriverKind::WongZakai(partition))
    }

    pub fn limit() -> Self {
        Self::new(DriverKind::Limit)
    }

    pub fn deterministic() -> Self {
        Self::new(DriverKind::Deterministic)
    }

    /// Switches the Laplacian and/or the nonlinearity off.
    pub fn linear_test(mut self, laplacian: bool, nonlinearity: bool) -> Self {
        self.laplacian = laplacian;
        self.nonlinearity = nonlinearity;
        self
    }

    pub fn with_truncation(mut self, truncation: TruncationSpec) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_records(mut self, records: Records) -> Self {
        self.records = records;
        self
    }

    pub fn with_ceiling(mut self, ceiling: f64) -> Self {
        self.ceiling = ceiling;
        self
    }

    fn record_steps(&self, total_steps: usize) -> Result<Vec<usize>, DynamicsError> {
        let steps = match &self.records {
            Records::Uniform(count) => {
                if *count == 0 || !total_steps.is_multiple_of(*count) {
                    return Err(DynamicsError::InvalidRecords(format!(
                        "{count} record intervals do not divide {total_steps} internal steps"
                    )));
                }
                let stride = total_steps / count;
                (0..=*count).map(|r| r * stride).collect::<Vec<_>>()
            }
            Records::Times(times) => {
                let scale = total_steps as f64;
                times
                    .iter()
                    .map(|&t| {
                        let s = t * scale;
                        let i = s.round();
                        if !t.is_finite()
                            || i < 0.0
                            || i > scale
                            || (s - i).abs() > 1e-9
                        {
                            Err(DynamicsError::InvalidRecords(format!(
                                "time {t} is not an internal step boundary"
                            )))
                        } else {
                            Ok(i as usize)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        if steps.is_empty() || steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DynamicsError::InvalidRecords(
                "record times must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(steps)
    }
}

/// Solution samples with running diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    fields: Vec<ComplexField>,
    mass_series: Vec<f64>,
    running_x2: Vec<f64>,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        fields: Vec<ComplexField>,
        mass_series: Vec<f64>,
        running_x2: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(times.len(), fields.len());
        Self {
            times,
            fields,
            mass_series,
            running_x2,
        }
    }

    /// Trajectory built from fields alone; running values computed by the
    /// left-endpoint rule over the sample times.
    pub fn from_fields(times: Vec<f64>, fields: Vec<ComplexField>) -> Self {
        let mass_series = fields.iter().map(ComplexField::mass).collect();
        let mut acc = 0.0;
        let mut running_x2 = Vec::with_capacity(fields.len());
        for i in 0..fields.len() {
            if i > 0 {
                let l10 = fields[i - 1].lp_norm(10.0).expect("valid exponent");
                acc += l10.powi(5) * (times[i] - times[i - 1]);
            }
            running_x2.push(acc.powf(0.2));
        }
        Self::new(times, fields, mass_series, running_x2)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[ComplexField] {
        &self.fields
    }

    pub fn mass_series(&self) -> &[f64] {
        &self.mass_series
    }

    /// (∫₀^t ‖u(s)‖⁵_{L¹⁰} ds)^{1/5} at every record time.
    pub fn running_x2(&self) -> &[f64] {
        &self.running_x2
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_field(&self) -> &ComplexField {
        self.fields.last().expect("trajectory has at least one sample")
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        self.fields[0].grid()
    }

    /// max_t |mass(t) - mass(0)| / mass(0); zero for a zero trajectory.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.mass_series[0];
        if m0 == 0.0 {
            return self.mass_series.iter().fold(0.0, |a, m| a.max(m.abs()));
        }
        self.mass_series
            .iter()
            .map(|m| (m - m0).abs() / m0)
            .fold(0.0, f64::max)
    }

    /// Pointwise difference of two trajectories sampled at the same times.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory, DynamicsError> {
        if self.times != other.times {
            return Err(DynamicsError::InvalidRecords(
                "trajectories are sampled at different times".into(),
            ));
        }
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory::from_fields(self.times.clone(), fields))
    }

    pub fn scaled(&self, factor: f64) -> Trajectory {
        let fields = self
            .fields
            .iter()
            .map(|f| f.scale(Complex64::new(factor, 0.0)))
            .collect();
        Trajectory::new(
            self.times.clone(),
            fields,
            self.mass_series.iter().map(|m| m * factor * factor).collect(),
            self.running_x2.iter().map(|r| r * factor.abs()).collect(),
        )
    }
}

/// Initial data f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    /// amplitude·exp(-x²/2).
    Gaussian { amplitude: f64 },
    /// A·exp(-x²/2) with A uniform on [min, max], drawn per path.
    RandomAmplitude { min: f64, max: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Gaussian { amplitude: 1.2 }
    }
}

impl InitialData {
    pub fn sample(&self, grid: &Arc<SpatialGrid>, seed: u64, path_index: u64) -> ComplexField {
        let amplitude = match *self {
            InitialData::Gaussian { amplitude } => amplitude,
            InitialData::RandomAmplitude { min, max } => {
                let mut rng = substream(seed, "initial-amplitude", &[path_index]);
                if max > min {
                    rng.gen_range(min..=max)
                } else {
                    min
                }
            }
        };
        ComplexField::from_fn(grid.clone(), |x| {
            Complex64::new(amplitude * (-x * x / 2.0).exp(), 0.0)
        })
    }

    /// Almost-sure bound on ‖f‖₂.
    pub fn l2_bound(&self) -> f64 {
        let peak = match *self {
            InitialData::Gaussian { amplitude } => amplitude.abs(),
            InitialData::RandomAmplitude { min, max } => min.abs().max(max.abs()),
        };
        peak * std::f64::consts::PI.powf(0.25)
    }
}

struct Stepper<'a> {
    grid: &'a SpatialGrid,
    half_free: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper<'_> {
    fn half_free(&mut self, u: &mut [Complex64]) {
        self.grid.forward(u, &mut self.scratch);
        for (c, m) in u.iter_mut().zip(&self.half_free) {
            *c *= m;
        }
        self.grid.inverse(u, &mut self.scratch);
    }
}

/// Evolves `initial` over [0, 1] according to `spec`.
pub fn evolve(
    initial: &ComplexField,
    model: &NoiseModel,
    ensemble: &BrownianEnsemble,
    spec: &SolverSpec,
) -> Result<Trajectory, DynamicsError> {
    let grid = initial.grid().clone();
    if !grid.same_as(model.grid()) {
        return Err(DynamicsError::GridMismatch);
    }
    if !initial.is_finite() {
        return Err(DynamicsError::NonFinite(0.0));
    }
    if spec.substeps == 0 {
        return Err(DynamicsError::InvalidSubsteps);
    }
    let master_steps = ensemble.master_steps();
    let total_steps = master_steps * spec.substeps;
    let dt = 1.0 / total_steps as f64;
    let record_steps = spec.record_steps(total_steps)?;

    // Per master step: the interval owning it and the phase increment
    // coefficients ΔB_k · δ/(t_{j+1} - t_j) of that interval.
    let partition = match &spec.driver {
        DriverKind::WongZakai(p) => Some(p.clone()),
        DriverKind::Limit => Some(Partition::uniform(master_steps, master_steps)?),
        DriverKind::Deterministic => None,
    };
    let noise_plan = match &partition {
        Some(p) => {
            if p.master_steps() != master_steps {
                return Err(NoiseError::MasterGridMismatch {
                    partition: p.master_steps(),
                    ensemble: master_steps,
                }
                .into());
            }
            if ensemble.num_modes() != model.num_modes() {
                return Err(NoiseError::ModeCountMismatch {
                    ensemble: ensemble.num_modes(),
                    model: model.num_modes(),
                }
                .into());
            }
            let rates: Vec<Vec<f64>> = p
                .indices()
                .windows(2)
                .map(|w| {
                    let len = (w[1] - w[0]) as f64 / master_steps as f64;
                    let ratio = dt / len;
                    (0..model.num_modes())
                        .map(|k| {
                            let path = ensemble.path(k);
                            (path[w[1]] - path[w[0]]) * ratio
                        })
                        .collect()
                })
                .collect();
            Some((p.interval_of_master_step(), rates))
        }
        None => None,
    };
    let has_noise = noise_plan.is_some() && model.num_modes() > 0;

    let n = grid.num_points();
    let dx = grid.dx();
    let mut stepper = Stepper {
        grid: &grid,
        half_free: grid.free_multipliers(dt / 2.0),
        scratch: vec![Complex64::new(0.0, 0.0); grid.scratch_len()],
    };
    let mut u = initial.values().to_vec();
    let mut potential = vec![0.0; n];
    let mut current_interval = usize::MAX;

    let ceiling_sq = spec.ceiling * spec.ceiling;
    let mut x2_accum: f64 = 0.0;
    let mut times = Vec::with_capacity(record_steps.len());
    let mut fields = Vec::with_capacity(record_steps.len());
    let mut mass_series = Vec::with_capacity(record_steps.len());
    let mut running_x2 = Vec::with_capacity(record_steps.len());
    let mut next_record = 0;

    for step in 0..=total_steps {
        let time = step as f64 * dt;
        let mut mass = 0.0;
        let mut l10_sum = 0.0;
        let mut sup_sq: f64 = 0.0;
        for v in &u {
            let a = v.norm_sqr();
            mass += a;
            l10_sum += a.powi(5);
            sup_sq = sup_sq.max(a);
        }
        if !(mass.is_finite() && l10_sum.is_finite()) {
            return Err(DynamicsError::NonFinite(time));
        }
        if sup_sq > ceiling_sq {
            return Err(DynamicsError::BlowUp {
                time,
                sup: sup_sq.sqrt(),
                ceiling: spec.ceiling,
            });
        }
        let running = x2_accum.powf(0.2);
        if next_record < record_steps.len() && record_steps[next_record] == step {
            times.push(time);
            fields.push(ComplexField::from_raw(grid.clone(), u.clone()));
            mass_series.push(mass * dx);
            running_x2.push(running);
            next_record += 1;
        }
        if step == total_steps {
            break;
        }

        let factor = if spec.nonlinearity {
            spec.truncation.phi(running)?
        } else {
            0.0
        };
        x2_accum += (l10_sum * dx).sqrt() * dt;

        if spec.laplacian {
            stepper.half_free(&mut u);
        }
        if has_noise {
            let (owner, rates) = noise_plan.as_ref().expect("noise plan present");
            let j = owner[step / spec.substeps];
            if j != current_interval {
                current_interval = j;
                potential.iter_mut().for_each(|p| *p = 0.0);
                for (rate, mode) in rates[j].iter().zip(model.modes()) {
                    for (p, v) in potential.iter_mut().zip(mode.values()) {
                        *p += rate * v;
                    }
                }
            }
        }
        let nonlinear_rate = dt * factor;
        match (has_noise, factor != 0.0) {
            (true, true) => {
                for (v, p) in u.iter_mut().zip(&potential) {
                    let theta = nonlinear_rate * v.norm_sqr().powi(2) + p;
                    let (s, c) = theta.sin_cos();
                    *v *= Complex64::new(c, -s);
                }
            }
            (true, false) => {
                for (v, p) in u.iter_mut().zip(&potential) {
                    let (s, c) = p.sin_cos();
                    *v *= Complex64::new(c, -s);
                }
            }
            (false, true) => {
                for v in u.iter_mut() {
                    let theta = nonlinear_rate * v.norm_sqr().powi(2);
                    let (s, c) = theta.sin_cos();
                    *v *= Complex64::new(c, -s);
                }
            }
            (false, false) => {}
        }
        if spec.laplacian {
            stepper.half_free(&mut u);
        }
    }

    Ok(Trajectory::new(times, fields, mass_series, running_x2))
}

/// Two solves driven by the same Brownian realization.
pub fn coupled_pair(
    initial: &ComplexField,
    model: &NoiseModel,
    ensemble: &BrownianEnsemble,
    spec_a: &SolverSpec,
    spec_b: &SolverSpec,
) -> Result<(Trajectory, Trajectory), DynamicsError> {
    let a = evolve(initial, model, ensemble, spec_a)?;
    let b = evolve(initial, model, ensemble, spec_b)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{build_standard_noise, ModeDescriptor};

    #[test]
    fn nonlinearity_cases() {
        let g = SpatialGrid::new(16, 1.0).unwrap();
        let z = nonlinearity(&ComplexField::zeros(g.clone()));
        assert!(z.values().iter().all(|v| v.norm() == 0.0));
        let two = nonlinearity(&ComplexField::from_fn(g.clone(), |_| Complex64::new(2.0, 0.0)));
        assert!(two.values().iter().all(|v| *v == Complex64::new(32.0, 0.0)));
        let c = Complex64::new(0.0, 0.7);
        let out = nonlinearity(&ComplexField::from_fn(g, |_| c));
        let expect = c * 0.7f64.powi(4);
        assert!(out.values().iter().all(|v| (v - expect).norm() < 1e-15));
    }

    #[test]
    fn cutoff_profile() {
        let t = TruncationSpec::at(3.0).unwrap();
        assert_eq!(t.phi(0.0).unwrap(), 1.0);
        assert_eq!(t.phi(3.0).unwrap(), 1.0);
        assert_eq!(t.phi(6.0).unwrap(), 0.0);
        assert!((t.phi(4.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(t.phi(-1.0).is_err());
        assert_eq!(TruncationSpec::none().phi(1e9).unwrap(), 1.0);
        assert_eq!(TruncationSpec::at(f64::INFINITY).unwrap(), TruncationSpec::none());
        assert!(TruncationSpec::at(0.0).is_err());
        let mut prev = 1.0;
        for i in 0..=400 {
            let v = cutoff(i as f64 * 0.01);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = SpatialGrid::new(64, 16.0).unwrap();
        let m = NoiseModel::silent(g.clone());
        let e = BrownianEnsemble::generate(0, 32, 1, 0).unwrap();
        let spec = SolverSpec::deterministic().with_records(Records::Uniform(8));
        let tr = evolve(&ComplexField::zeros(g), &m, &e, &spec).unwrap();
        assert_eq!(tr.len(), 9);
        assert!(tr.fields().iter().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn linear_phase_is_exact() {
        let g = SpatialGrid::new(128, 16.0).unwrap();
        let m = build_standard_noise(
            &g,
            &[
                ModeDescriptor::new(0.6, -1.0, 1.0),
                ModeDescriptor::new(0.4, 2.0, 0.8),
            ],
            10.0,
        )
        .unwrap();
        let e = BrownianEnsemble::generate(2, 256, 5, 3).unwrap();
        let f = InitialData::default().sample(&g, 0, 0);
        let spec = SolverSpec::wong_zakai(Partition::uniform(8, 256).unwrap())
            .linear_test(false, false)
            .with_records(Records::Uniform(1));
        let tr = evolve(&f, &m, &e, &spec).unwrap();
        let w1 = e.wiener_at(&m, 1.0).unwrap();
        for ((u, f0), w) in tr.final_field().values().iter().zip(f.values()).zip(w1.values()) {
            assert!((u - f0 * Complex64::from_polar(1.0, -w)).norm() <= 1e-12);
        }
    }

    #[test]
    fn record_validation() {
        let g = SpatialGrid::new(32, 16.0).unwrap();
        let m = NoiseModel::silent(g.clone());
        let e = BrownianEnsemble::generate(0, 16, 1, 0).unwrap();
        let f = InitialData::default().sample(&g, 0, 0);
        let bad = SolverSpec::deterministic().with_records(Records::Uniform(32));
        assert!(matches!(evolve(&f, &m, &e, &bad), Err(DynamicsError::InvalidRecords(_))));
        let bad = SolverSpec::deterministic().with_records(Records::Times(vec![0.0, 0.01]));
        assert!(evolve(&f, &m, &e, &bad).is_err());
        let ok = SolverSpec::deterministic().with_records(Records::Times(vec![0.25, 1.0]));
        assert_eq!(evolve(&f, &m, &e, &ok).unwrap().times(), &[0.25, 1.0]);
    }

    #[test]
    fn blow_up_guard_fires() {
        let g = SpatialGrid::new(32, 16.0).unwrap();
        let m = NoiseModel::silent(g.clone());
        let e = BrownianEnsemble::generate(0, 16, 1, 0).unwrap();
        let f = InitialData::Gaussian { amplitude: 2.0 }.sample(&g, 0, 0);
        let spec = SolverSpec::deterministic()
            .with_records(Records::Uniform(4))
            .with_ceiling(1.0);
        assert!(matches!(evolve(&f, &m, &e, &spec), Err(DynamicsError::BlowUp { .. })));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let g = SpatialGrid::new(32, 16.0).unwrap();
        let h = SpatialGrid::new(64, 16.0).unwrap();
        let m = NoiseModel::silent(h);
        let e = BrownianEnsemble::generate(0, 16, 1, 0).unwrap();
        let f = InitialData::default().sample(&g, 0, 0);
        let s = SolverSpec::deterministic().with_records(Records::Uniform(4));
        assert!(matches!(
            coupled_pair(&f, &m, &e, &s, &s),
            Err(DynamicsError::GridMismatch)
        ));
    }

    #[test]
    fn random_amplitude_respects_bound() {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        let init = InitialData::RandomAmplitude { min: 0.5, max: 1.0 };
        for path in 0..20 {
            let f = init.sample(&g, 42, path);
            assert!(f.lp_norm(2.0).unwrap() <= init.l2_bound() * (1.0 + 1e-12));
            assert_eq!(f, init.sample(&g, 42, path));
        }
    }
}
