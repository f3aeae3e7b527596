//! The finite-rank Wiener process W(t,x) = Σ_k B_k(t)·V_k(x), its dyadic
//! master-grid sampling, partitions of [0,1] and the piecewise-linear
//! (Wong–Zakai) driver built on them.
//!
//! Every Brownian path lives on a fixed grid of `Q` uniform steps. Coarser
//! partitions only read restrictions of that grid, so approximants at
//! different meshes are automatically coupled to the same realization.

use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{GridError, RealField, SpatialGrid};

/// Relative tolerance used to decide whether a time sits on the master grid.
const GRID_SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("mode {index} (center {center}, width {width}) leaves the window |x| <= {window}")]
    ModeEscapes {
        index: usize,
        center: f64,
        width: f64,
        window: f64,
    },
    #[error("mode {index} has non-positive width {width}")]
    InvalidWidth { index: usize, width: f64 },
    #[error("noise bound {total} exceeds the cap {cap}")]
    CapExceeded { total: f64, cap: f64 },
    #[error("master step count {0} must be a positive power of two")]
    InvalidMasterSteps(usize),
    #[error("time {t} is not on the master grid of {steps} steps")]
    OffMasterGrid { t: f64, steps: usize },
    #[error("partition is invalid: {0}")]
    InvalidPartition(String),
    #[error("interval index {index} out of range for a partition with {len} intervals")]
    IntervalOutOfRange { index: usize, len: usize },
    #[error("time {0} is outside [0, 1)")]
    TimeOutOfRange(f64),
    #[error("ensemble has {ensemble} modes but the noise model has {model}")]
    ModeCountMismatch { ensemble: usize, model: usize },
    #[error("partition uses {partition} master steps, ensemble uses {ensemble}")]
    MasterGridMismatch { partition: usize, ensemble: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("increment dump: {0}")]
    Io(#[from] io::Error),
}

/// Deterministic random stream for a (seed, domain, ids) triple.
///
/// The stream depends only on its arguments, never on call order, which is
/// what makes results independent of worker scheduling.
pub fn substream(seed: u64, domain: &str, ids: &[u64]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    for id in ids {
        hasher.update(id.to_le_bytes());
    }
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// Gaussian bump a·exp(-(x-c)²/σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeDescriptor {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl ModeDescriptor {
    pub fn new(amplitude: f64, center: f64, width: f64) -> Self {
        Self {
            amplitude,
            center,
            width,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.width;
        self.amplitude * (-z * z).exp()
    }
}

/// Spatial structure of the noise: the modes V_k and derived bounds.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    grid: Arc<SpatialGrid>,
    modes: Vec<RealField>,
    lambda_k: Vec<f64>,
    lambda_noi: f64,
    v_squared: RealField,
}

impl NoiseModel {
    /// Model from already-sampled real modes; `cap` bounds Σ_k Λ_k.
    pub fn from_modes(
        grid: Arc<SpatialGrid>,
        modes: Vec<RealField>,
        cap: f64,
    ) -> Result<Self, NoiseError> {
        let mut lambda_k = Vec::with_capacity(modes.len());
        let mut v_squared = vec![0.0; grid.num_points()];
        for mode in &modes {
            if !mode.grid().same_as(&grid) {
                return Err(GridError::GridMismatch.into());
            }
            lambda_k.push(mode.lp_norm(1.0)? + mode.lp_norm(f64::INFINITY)?);
            for (acc, v) in v_squared.iter_mut().zip(mode.values()) {
                *acc += v * v;
            }
        }
        let lambda_noi: f64 = lambda_k.iter().sum();
        if lambda_noi > cap {
            return Err(NoiseError::CapExceeded {
                total: lambda_noi,
                cap,
            });
        }
        let v_squared = RealField::from_raw(grid.clone(), v_squared);
        Ok(Self {
            grid,
            modes,
            lambda_k,
            lambda_noi,
            v_squared,
        })
    }

    /// Model without noise.
    pub fn silent(grid: Arc<SpatialGrid>) -> Self {
        Self::from_modes(grid, Vec::new(), 0.0).expect("empty model is always valid")
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn modes(&self) -> &[RealField] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Per-mode ‖V_k‖₁ + ‖V_k‖_∞.
    pub fn lambda_k(&self) -> &[f64] {
        &self.lambda_k
    }

    pub fn lambda_noi(&self) -> f64 {
        self.lambda_noi
    }

    /// Σ_k V_k², the Itô–Stratonovich correction potential.
    pub fn v_squared(&self) -> &RealField {
        &self.v_squared
    }

    /// Σ_k coeffs[k]·V_k.
    pub fn combine(&self, coeffs: &[f64]) -> RealField {
        let mut out = RealField::zeros(self.grid.clone());
        for (c, mode) in coeffs.iter().zip(&self.modes) {
            out.axpy(*c, mode);
        }
        out
    }
}

/// Gaussian-bump noise confined to |x| ≤ L/2.
pub fn build_standard_noise(
    grid: &Arc<SpatialGrid>,
    descriptors: &[ModeDescriptor],
    cap: f64,
) -> Result<NoiseModel, NoiseError> {
    let window = grid.half_length() / 2.0;
    let mut modes = Vec::with_capacity(descriptors.len());
    for (index, d) in descriptors.iter().enumerate() {
        if !(d.width > 0.0 && d.width.is_finite()) {
            return Err(NoiseError::InvalidWidth {
                index,
                width: d.width,
            });
        }
        if d.center.abs() + 4.0 * d.width > window {
            return Err(NoiseError::ModeEscapes {
                index,
                center: d.center,
                width: d.width,
                window,
            });
        }
        modes.push(RealField::from_fn(grid.clone(), |x| d.eval(x)));
    }
    NoiseModel::from_modes(grid.clone(), modes, cap)
}

fn check_master_steps(q: usize) -> Result<(), NoiseError> {
    if q == 0 || !q.is_power_of_two() {
        Err(NoiseError::InvalidMasterSteps(q))
    } else {
        Ok(())
    }
}

/// Index q with t = q/Q, if `t` sits on the master grid.
pub fn master_index(t: f64, master_steps: usize) -> Result<usize, NoiseError> {
    let scaled = t * master_steps as f64;
    let q = scaled.round();
    if !t.is_finite() || q < 0.0 || q > master_steps as f64 || (scaled - q).abs() > GRID_SNAP_TOL {
        return Err(NoiseError::OffMasterGrid {
            t,
            steps: master_steps,
        });
    }
    Ok(q as usize)
}

/// One realization of the K independent Brownian motions on the master grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianEnsemble {
    master_steps: usize,
    seed: u64,
    path_index: u64,
    increments: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
}

impl BrownianEnsemble {
    /// Draws the increments of `num_modes` Brownian motions for one path.
    /// Each mode has its own substream keyed by (seed, path_index, mode).
    pub fn generate(
        num_modes: usize,
        master_steps: usize,
        seed: u64,
        path_index: u64,
    ) -> Result<Self, NoiseError> {
        check_master_steps(master_steps)?;
        let sd = (1.0 / master_steps as f64).sqrt();
        let increments = (0..num_modes)
            .map(|k| {
                let mut rng = substream(seed, "brownian", &[path_index, k as u64]);
                (0..master_steps)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * sd
                    })
                    .collect()
            })
            .collect();
        Self::from_increments(master_steps, seed, path_index, increments)
    }

    pub fn from_increments(
        master_steps: usize,
        seed: u64,
        path_index: u64,
        increments: Vec<Vec<f64>>,
    ) -> Result<Self, NoiseError> {
        check_master_steps(master_steps)?;
        if increments.iter().any(|row| row.len() != master_steps) {
            return Err(NoiseError::InvalidPartition(
                "increment rows must have one entry per master step".into(),
            ));
        }
        let cumulative = increments
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                std::iter::once(0.0)
                    .chain(row.iter().map(|d| {
                        acc += d;
                        acc
                    }))
                    .collect()
            })
            .collect();
        Ok(Self {
            master_steps,
            seed,
            path_index,
            increments,
            cumulative,
        })
    }

    pub fn master_steps(&self) -> usize {
        self.master_steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn num_modes(&self) -> usize {
        self.increments.len()
    }

    /// Increments of mode k, variance 1/Q each.
    pub fn increments(&self, mode: usize) -> &[f64] {
        &self.increments[mode]
    }

    /// B_k(q/Q) for q = 0..=Q.
    pub fn path(&self, mode: usize) -> &[f64] {
        &self.cumulative[mode]
    }

    /// B_k(t_q) for every mode.
    pub fn values_at_index(&self, q: usize) -> Vec<f64> {
        self.cumulative.iter().map(|c| c[q]).collect()
    }

    fn check_model(&self, model: &NoiseModel) -> Result<(), NoiseError> {
        if model.num_modes() != self.num_modes() {
            return Err(NoiseError::ModeCountMismatch {
                ensemble: self.num_modes(),
                model: model.num_modes(),
            });
        }
        Ok(())
    }

    /// W(t, ·) = Σ_k B_k(t)·V_k for a master-grid time `t`.
    pub fn wiener_at(&self, model: &NoiseModel, t: f64) -> Result<RealField, NoiseError> {
        self.check_model(model)?;
        let q = master_index(t, self.master_steps)?;
        Ok(model.combine(&self.values_at_index(q)))
    }

    /// Writes the replay dump: little-endian u64 header (Q, K, seed,
    /// path_index) followed by the K×Q increments row-major as f64.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<(), NoiseError> {
        for word in [
            self.master_steps as u64,
            self.num_modes() as u64,
            self.seed,
            self.path_index,
        ] {
            out.write_all(&word.to_le_bytes())?;
        }
        for row in &self.increments {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self, NoiseError> {
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            input.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [q, k, seed, path_index] = header;
        let q = usize::try_from(q).map_err(|_| NoiseError::InvalidMasterSteps(usize::MAX))?;
        check_master_steps(q)?;
        let mut increments = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let mut row = Vec::with_capacity(q);
            for _ in 0..q {
                input.read_exact(&mut word)?;
                row.push(f64::from_le_bytes(word));
            }
            increments.push(row);
        }
        Self::from_increments(q, seed, path_index, increments)
    }
}

/// Breakpoints 0 = t_0 < … < t_n = 1 lying on the master grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    master_steps: usize,
    indices: Vec<usize>,
    breakpoints: Vec<f64>,
}

impl Partition {
    /// Uniform partition with `n` intervals; `n` must divide Q.
    pub fn uniform(n: usize, master_steps: usize) -> Result<Self, NoiseError> {
        check_master_steps(master_steps)?;
        if n == 0 || !master_steps.is_multiple_of(n) {
            return Err(NoiseError::InvalidPartition(format!(
                "n = {n} does not divide the master step count {master_steps}"
            )));
        }
        let stride = master_steps / n;
        Self::from_indices((0..=n).map(|j| j * stride).collect(), master_steps)
    }

    /// Partition from arbitrary breakpoints, each snapped to the master grid.
    pub fn from_breakpoints(points: &[f64], master_steps: usize) -> Result<Self, NoiseError> {
        check_master_steps(master_steps)?;
        let indices = points
            .iter()
            .map(|&t| master_index(t, master_steps))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_indices(indices, master_steps)
    }

    fn from_indices(indices: Vec<usize>, master_steps: usize) -> Result<Self, NoiseError> {
        if indices.first() != Some(&0) || indices.last() != Some(&master_steps) {
            return Err(NoiseError::InvalidPartition(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NoiseError::InvalidPartition(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let q = master_steps as f64;
        let breakpoints = indices.iter().map(|&i| i as f64 / q).collect();
        Ok(Self {
            master_steps,
            indices,
            breakpoints,
        })
    }

    pub fn master_steps(&self) -> usize {
        self.master_steps
    }

    pub fn num_intervals(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Master-grid indices of the breakpoints.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// max_j (t_{j+1} - t_j).
    pub fn mesh(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn interval(&self, j: usize) -> Result<(f64, f64), NoiseError> {
        if j >= self.num_intervals() {
            return Err(NoiseError::IntervalOutOfRange {
                index: j,
                len: self.num_intervals(),
            });
        }
        Ok((self.breakpoints[j], self.breakpoints[j + 1]))
    }

    /// (j(s), [s]) with t_{j(s)} ≤ s < t_{j(s)+1}.
    pub fn bracket(&self, s: f64) -> Result<(usize, f64), NoiseError> {
        if !(0.0..1.0).contains(&s) {
            return Err(NoiseError::TimeOutOfRange(s));
        }
        let j = self.breakpoints.partition_point(|&t| t <= s) - 1;
        Ok((j, self.breakpoints[j]))
    }

    /// Interval index owning master step q (the step [q/Q, (q+1)/Q)).
    pub(crate) fn interval_of_master_step(&self) -> Vec<usize> {
        let mut owner = Vec::with_capacity(self.master_steps);
        for (j, w) in self.indices.windows(2).enumerate() {
            owner.extend(std::iter::repeat_n(j, w[1] - w[0]));
        }
        owner
    }
}

/// Piecewise-linear interpolation of W on a partition.
///
/// Only the K scalar Brownian increments per interval are cached; the
/// increment fields Δ_jW are assembled on request.
#[derive(Debug, Clone)]
pub struct WzDriver<'a> {
    partition: Partition,
    ensemble: &'a BrownianEnsemble,
    model: &'a NoiseModel,
    coefficients: Vec<Vec<f64>>,
}

impl<'a> WzDriver<'a> {
    pub fn new(
        partition: Partition,
        ensemble: &'a BrownianEnsemble,
        model: &'a NoiseModel,
    ) -> Result<Self, NoiseError> {
        ensemble.check_model(model)?;
        if partition.master_steps() != ensemble.master_steps() {
            return Err(NoiseError::MasterGridMismatch {
                partition: partition.master_steps(),
                ensemble: ensemble.master_steps(),
            });
        }
        let coefficients = partition
            .indices()
            .windows(2)
            .map(|w| {
                (0..ensemble.num_modes())
                    .map(|k| {
                        let path = ensemble.path(k);
                        path[w[1]] - path[w[0]]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            partition,
            ensemble,
            model,
            coefficients,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn ensemble(&self) -> &BrownianEnsemble {
        self.ensemble
    }

    pub fn model(&self) -> &NoiseModel {
        self.model
    }

    /// B_k(t_{j+1}) - B_k(t_j) for every mode.
    pub fn increment_coefficients(&self, j: usize) -> Result<&[f64], NoiseError> {
        self.coefficients
            .get(j)
            .map(Vec::as_slice)
            .ok_or(NoiseError::IntervalOutOfRange {
                index: j,
                len: self.partition.num_intervals(),
            })
    }

    /// Δ_jW = W(t_{j+1}) - W(t_j).
    pub fn interval_increment(&self, j: usize) -> Result<RealField, NoiseError> {
        Ok(self.model.combine(self.increment_coefficients(j)?))
    }

    /// Slope Δ_jW / (t_{j+1} - t_j) on interval j.
    pub fn slope(&self, j: usize) -> Result<RealField, NoiseError> {
        let (a, b) = self.partition.interval(j)?;
        let len = b - a;
        let coeffs: Vec<f64> = self
            .increment_coefficients(j)?
            .iter()
            .map(|c| c / len)
            .collect();
        Ok(self.model.combine(&coeffs))
    }

    /// ‖Δ_jW‖_{L^∞} for every interval.
    pub fn increment_sup_norms(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| self.model.combine(c).max_abs())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Arc<SpatialGrid> {
        SpatialGrid::new(2048, 16.0).unwrap()
    }

    #[test]
    fn empty_model_is_silent() {
        let m = build_standard_noise(&grid(), &[], 1.0).unwrap();
        assert_eq!(m.lambda_noi(), 0.0);
        assert!(m.v_squared().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_lambda() {
        let m = build_standard_noise(&grid(), &[ModeDescriptor::new(1.0, 0.0, 1.0)], 10.0).unwrap();
        assert!((m.lambda_k()[0] - (PI.sqrt() + 1.0)).abs() < 1e-8);
        assert!((m.lambda_noi() - m.lambda_k()[0]).abs() <= 1e-12 * m.lambda_noi());
    }

    #[test]
    fn disjoint_modes_v_squared() {
        let d = [
            ModeDescriptor::new(0.3, -5.0, 0.5),
            ModeDescriptor::new(0.7, 5.0, 0.5),
        ];
        let m = build_standard_noise(&grid(), &d, 10.0).unwrap();
        assert!((m.v_squared().max_abs() - 0.49).abs() <= 1e-12);
        for (i, v2) in m.v_squared().values().iter().enumerate() {
            let s: f64 = m.modes().iter().map(|v| v.values()[i].powi(2)).sum();
            assert!((v2 - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_escaping_mode_and_cap() {
        let g = grid();
        let err = build_standard_noise(&g, &[ModeDescriptor::new(1.0, 6.0, 1.0)], 10.0);
        assert!(matches!(err, Err(NoiseError::ModeEscapes { .. })));
        let err = build_standard_noise(&g, &[ModeDescriptor::new(1.0, 0.0, 1.0)], 1.0);
        assert!(matches!(err, Err(NoiseError::CapExceeded { .. })));
    }

    #[test]
    fn wiener_at_zero_and_grid_check() {
        let g = grid();
        let m = build_standard_noise(&g, &[ModeDescriptor::new(0.5, 0.0, 1.0)], 10.0).unwrap();
        let e = BrownianEnsemble::generate(1, 64, 7, 0).unwrap();
        assert_eq!(e.wiener_at(&m, 0.0).unwrap().max_abs(), 0.0);
        assert!(matches!(
            e.wiener_at(&m, 0.01),
            Err(NoiseError::OffMasterGrid { .. })
        ));
        let w1 = e.wiener_at(&m, 1.0).unwrap();
        let b1 = e.path(0)[64];
        for (w, v) in w1.values().iter().zip(m.modes()[0].values()) {
            assert!((w - b1 * v).abs() <= 1e-15);
        }
    }

    #[test]
    fn bracket_maps() {
        let p = Partition::uniform(8, 64).unwrap();
        assert_eq!(p.bracket(0.0).unwrap(), (0, 0.0));
        assert_eq!(p.bracket(0.3).unwrap(), (2, 0.25));
        assert_eq!(p.bracket(0.375).unwrap(), (3, 0.375));
        assert!(p.bracket(1.0).is_err());
        assert!(p.bracket(-0.1).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::uniform(3, 8192).is_err());
        assert!(Partition::from_breakpoints(&[0.0, 0.5, 0.5, 1.0], 8).is_err());
        assert!(Partition::from_breakpoints(&[0.0, 0.3, 1.0], 8).is_err());
        let p = Partition::from_breakpoints(&[0.0, 0.125, 0.5, 1.0], 8).unwrap();
        assert_eq!(p.mesh(), 0.5);
        assert_eq!(p.num_intervals(), 3);
    }

    #[test]
    fn degenerate_single_interval() {
        let g = SpatialGrid::new(64, 16.0).unwrap();
        let m = build_standard_noise(&g, &[ModeDescriptor::new(0.5, 1.0, 1.0)], 10.0).unwrap();
        let e = BrownianEnsemble::generate(1, 32, 3, 1).unwrap();
        let d = WzDriver::new(Partition::uniform(1, 32).unwrap(), &e, &m).unwrap();
        let inc = d.interval_increment(0).unwrap();
        let w = e.wiener_at(&m, 1.0).unwrap();
        for (a, b) in inc.values().iter().zip(w.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(d.interval_increment(1).is_err());
    }

    #[test]
    fn zero_noise_increments() {
        let g = SpatialGrid::new(64, 16.0).unwrap();
        let m = NoiseModel::silent(g);
        let e = BrownianEnsemble::generate(0, 16, 3, 1).unwrap();
        let d = WzDriver::new(Partition::uniform(4, 16).unwrap(), &e, &m).unwrap();
        assert_eq!(d.interval_increment(2).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn dump_round_trip() {
        let e = BrownianEnsemble::generate(2, 16, 99, 5).unwrap();
        let mut buf = Vec::new();
        e.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 4 + 8 * 2 * 16);
        assert_eq!(&buf[..8], &16u64.to_le_bytes());
        let back = BrownianEnsemble::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn seed_determinism() {
        let a = BrownianEnsemble::generate(3, 128, 11, 4).unwrap();
        let b = BrownianEnsemble::generate(3, 128, 11, 4).unwrap();
        assert_eq!(a, b);
        let c = BrownianEnsemble::generate(3, 128, 11, 5).unwrap();
        assert_ne!(a.increments(0), c.increments(0));
        // mode streams do not depend on how many modes are drawn
        let d = BrownianEnsemble::generate(1, 128, 11, 4).unwrap();
        assert_eq!(a.increments(0), d.increments(0));
    }
}
