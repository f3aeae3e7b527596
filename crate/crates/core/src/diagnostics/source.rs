//! Source-term maximal functions 𝒮*_mar and 𝒮*_qua of a Wong–Zakai
//! trajectory, the η-budget interval classification built from them, and
//! the crude per-interval 𝒳 bound.
//!
//! All integrals use left-endpoint rectangles on the trajectory's record grid,
//! which must be uniform on [0, 1] and contain every partition point.

use num_complex::Complex64;

use super::{DiagnosticsError, EstimateReport};
use crate::dynamics::Trajectory;
use crate::grid::lp_of_moduli;
use crate::noise::WzDriver;
use crate::spacetime::{x_norms, TimeInterval};

const GRID_TOL: f64 = 1e-9;

/// 𝒮*_mar and 𝒮*_qua sampled on an evaluation grid t_e = e·H, e = 0..=E.
/// Both are read as piecewise constant, S(t) = S(t_e) on [t_e, t_{e+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMaximal {
    times: Vec<f64>,
    mar: Vec<f64>,
    qua: Vec<f64>,
}

impl SourceMaximal {
    /// Series given directly on a uniform evaluation grid over [0, 1].
    pub fn from_series(mar: Vec<f64>, qua: Vec<f64>) -> Result<Self, DiagnosticsError> {
        if mar.len() != qua.len() || mar.len() < 2 {
            return Err(DiagnosticsError::InvalidParameter(
                "series need equal length of at least 2".into(),
            ));
        }
        if mar.iter().chain(&qua).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(DiagnosticsError::InvalidParameter(
                "series must be finite and nonnegative".into(),
            ));
        }
        let cells = mar.len() - 1;
        let times = (0..=cells).map(|e| e as f64 / cells as f64).collect();
        Ok(Self { times, mar, qua })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn mar(&self) -> &[f64] {
        &self.mar
    }

    pub fn qua(&self) -> &[f64] {
        &self.qua
    }

    fn cells(&self) -> usize {
        self.times.len() - 1
    }

    /// (∫_a^b S⁵)^{1/5} for each of the two series.
    pub fn l5_pair(&self, a: f64, b: f64) -> (f64, f64) {
        let cells = self.cells();
        let h = 1.0 / cells as f64;
        let (mut cm, mut cq) = (0.0, 0.0);
        for e in 0..cells {
            let lo = (e as f64 * h).max(a);
            let hi = ((e + 1) as f64 * h).min(b);
            if hi > lo {
                cm += self.mar[e].powi(5) * (hi - lo);
                cq += self.qua[e].powi(5) * (hi - lo);
            }
        }
        (cm.powf(0.2), cq.powf(0.2))
    }

    /// ‖𝒮*_mar‖_{L⁵(a,b)} + ‖𝒮*_qua‖_{L⁵(a,b)}.
    pub fn budget(&self, a: f64, b: f64) -> f64 {
        let (m, q) = self.l5_pair(a, b);
        m + q
    }

    /// First τ in (a, limit] where the budget from a reaches η, or `limit`;
    /// returns (τ, budget(a, τ)).
    fn stop(&self, a: f64, limit: f64, eta: f64) -> (f64, f64) {
        let cells = self.cells();
        let h = 1.0 / cells as f64;
        let (mut cm, mut cq) = (0.0f64, 0.0f64);
        let mut pos = a;
        let mut e = ((a / h).floor() as usize).min(cells - 1);
        while pos < limit && e < cells {
            let end = ((e + 1) as f64 * h).min(limit);
            let len = end - pos;
            if len > 0.0 {
                let mv = self.mar[e].powi(5);
                let qv = self.qua[e].powi(5);
                let at = |x: f64| (cm + mv * x).powf(0.2) + (cq + qv * x).powf(0.2);
                if at(len) >= eta {
                    let (mut lo, mut hi) = (0.0, len);
                    loop {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if at(mid) < eta {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    // `lo` keeps the budget below η; fall back to `hi` only
                    // when `lo` would make no progress.
                    let step = if pos + lo > a { lo } else { hi };
                    return (pos + step, at(step));
                }
                cm += mv * len;
                cq += qv * len;
            }
            pos = end;
            e += 1;
        }
        (limit, cm.powf(0.2) + cq.powf(0.2))
    }

    /// ‖S‖_{L⁵(0,1)} for each series.
    pub fn l5_norms(&self) -> (f64, f64) {
        self.l5_pair(0.0, 1.0)
    }
}

fn l10(values: &[Complex64], dx: f64) -> f64 {
    lp_of_moduli(values.iter().map(|v| v.norm()), dx, 10.0)
}

/// Record indices of the partition points.
fn partition_record_indices(traj: &Trajectory, driver: &WzDriver) -> Result<(usize, Vec<usize>), DiagnosticsError> {
    let times = traj.times();
    if times.len() < 2 {
        return Err(DiagnosticsError::InsufficientRecords("need at least two records".into()));
    }
    let steps = times.len() - 1;
    let h = 1.0 / steps as f64;
    if times.iter().enumerate().any(|(i, t)| (t - i as f64 * h).abs() > 1e-12) {
        return Err(DiagnosticsError::InsufficientRecords(
            "records must be uniform on [0, 1]".into(),
        ));
    }
    let indices = driver
        .partition()
        .breakpoints()
        .iter()
        .map(|&t| {
            let s = t * steps as f64;
            let i = s.round();
            if (s - i).abs() > GRID_TOL {
                Err(DiagnosticsError::InsufficientRecords(format!(
                    "partition point {t} is not a record time"
                )))
            } else {
                Ok(i as usize)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((steps, indices))
}

/// 𝒮*_mar(t) = sup_{τ ≤ t} ‖∫₀^τ e^{i(t-s)Δ}(Δ_{j(s)}W/|I_j| · e^{i(s-[s])Δ}v([s])) ds‖_{L¹⁰}
/// and
/// 𝒮*_qua(t) = ∫₀^t ∫_{[s]}^s ‖e^{i(t-s)Δ}[Δ_jW/|I_j| · e^{i(s-r)Δ}(Δ_jW/|I_j| · v(r))]‖_{L¹⁰} dr ds
/// on every `eval_stride`-th record time. The norm sits inside both integrals
/// of 𝒮*_qua.
pub fn source_maximal_functions(
    traj: &Trajectory,
    driver: &WzDriver,
    eval_stride: usize,
) -> Result<SourceMaximal, DiagnosticsError> {
    let (steps, rec_idx) = partition_record_indices(traj, driver)?;
    if eval_stride == 0 || steps % eval_stride != 0 {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "eval_stride {eval_stride} must divide the {steps} record intervals"
        )));
    }
    let grid = traj.grid().clone();
    if !grid.same_as(driver.model().grid()) {
        return Err(crate::grid::GridError::GridMismatch.into());
    }
    let n = grid.num_points();
    let dx = grid.dx();
    let h = 1.0 / steps as f64;
    let mut scratch = vec![Complex64::new(0.0, 0.0); grid.scratch_len()];
    let mut owner = Vec::with_capacity(steps);
    for (j, w) in rec_idx.windows(2).enumerate() {
        owner.extend(std::iter::repeat_n(j, w[1] - w[0]));
    }
    let slopes = (0..driver.partition().num_intervals())
        .map(|j| driver.slope(j))
        .collect::<Result<Vec<_>, _>>()?;
    // prop[k] = e^{-iξ²kh}, the symbol of e^{ikhΔ}.
    let prop: Vec<Vec<Complex64>> = (0..=steps).map(|k| grid.free_multipliers(k as f64 * h)).collect();
    let fields = traj.fields();
    let eval: Vec<usize> = (0..=steps).step_by(eval_stride).collect();

    // A_k = Σ_{i<k} h·e^{-is_iΔ} g(s_i) in Fourier space.
    let mut partial = Vec::with_capacity(steps + 1);
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    partial.push(acc.clone());
    let mut base_j = usize::MAX;
    let mut base = Vec::new();
    for i in 0..steps {
        let j = owner[i];
        if j != base_j {
            base = fields[rec_idx[j]].values().to_vec();
            grid.forward(&mut base, &mut scratch);
            base_j = j;
        }
        let mut w: Vec<Complex64> = base.iter().zip(&prop[i - rec_idx[j]]).map(|(c, m)| c * m).collect();
        grid.inverse(&mut w, &mut scratch);
        for (v, g) in w.iter_mut().zip(slopes[j].values()) {
            *v *= g;
        }
        grid.forward(&mut w, &mut scratch);
        for ((a, c), m) in acc.iter_mut().zip(&w).zip(&prop[i]) {
            *a += c * m.conj() * h;
        }
        partial.push(acc.clone());
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mar = eval
        .iter()
        .map(|&t| {
            let mut best: f64 = 0.0;
            for a in &partial[1..=t] {
                for ((b, c), m) in buf.iter_mut().zip(a).zip(&prop[t]) {
                    *b = c * m;
                }
                grid.inverse(&mut buf, &mut scratch);
                best = best.max(l10(&buf, dx));
            }
            best
        })
        .collect();

    // P_l = FFT(slope · v(r_l)).
    let sourced: Vec<Vec<Complex64>> = (0..steps)
        .map(|l| {
            let mut w: Vec<Complex64> = fields[l]
                .values()
                .iter()
                .zip(slopes[owner[l]].values())
                .map(|(v, g)| v * g)
                .collect();
            grid.forward(&mut w, &mut scratch);
            w
        })
        .collect();
    let mut qua = vec![0.0; eval.len()];
    let mut inner = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..steps {
        let j = owner[i];
        for l in rec_idx[j]..i {
            for ((b, c), m) in inner.iter_mut().zip(&sourced[l]).zip(&prop[i - l]) {
                *b = c * m;
            }
            grid.inverse(&mut inner, &mut scratch);
            for (v, g) in inner.iter_mut().zip(slopes[j].values()) {
                *v *= g;
            }
            grid.forward(&mut inner, &mut scratch);
            for (q, &t) in qua.iter_mut().zip(&eval) {
                if t <= i {
                    continue;
                }
                for ((b, c), m) in buf.iter_mut().zip(&inner).zip(&prop[t - i]) {
                    *b = c * m;
                }
                grid.inverse(&mut buf, &mut scratch);
                *q += h * h * l10(&buf, dx);
            }
        }
    }
    Ok(SourceMaximal {
        times: eval.iter().map(|&t| t as f64 * h).collect(),
        mar,
        qua,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BSubtype {
    /// Budget at least η/2.
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeBInterval {
    pub start: f64,
    pub end: f64,
    pub budget: f64,
    pub subtype: BSubtype,
}

/// Type-A partition intervals (large increment) and the η-budget type-B
/// pieces covering the rest of [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalClassification {
    pub eta: f64,
    /// Partition indices j with ‖Δ_jW‖_∞ ≥ η.
    pub type_a: Vec<usize>,
    pub type_a_spans: Vec<(f64, f64)>,
    pub type_b: Vec<TypeBInterval>,
}

impl IntervalClassification {
    /// J: the number of type-B intervals.
    pub fn j_count(&self) -> usize {
        self.type_b.len()
    }

    pub fn count_b_one(&self) -> usize {
        self.type_b.iter().filter(|b| b.subtype == BSubtype::One).count()
    }

    /// Type-A and type-B spans tile [0, 1] with disjoint interiors.
    pub fn tiles_unit_interval(&self, tol: f64) -> bool {
        let mut spans: Vec<(f64, f64)> = self
            .type_a_spans
            .iter()
            .copied()
            .chain(self.type_b.iter().map(|b| (b.start, b.end)))
            .collect();
        spans.sort_by(|x, y| x.0.total_cmp(&y.0));
        if spans.is_empty() || spans[0].0.abs() > tol || (spans[spans.len() - 1].1 - 1.0).abs() > tol {
            return false;
        }
        spans.iter().all(|s| s.1 > s.0) && spans.windows(2).all(|w| (w[1].0 - w[0].1).abs() <= tol)
    }

    /// max over type-B intervals of budget/η, recomputed from `source`.
    pub fn worst_budget_ratio(&self, source: &SourceMaximal) -> f64 {
        self.type_b
            .iter()
            .map(|b| source.budget(b.start, b.end) / self.eta)
            .fold(0.0, f64::max)
    }
}

/// Greedy classification: type-A where ‖Δ_jW‖_∞ ≥ η; each maximal run of the
/// remaining partition intervals is cut wherever the running budget from the
/// last cut reaches η. Runs that collapse to a single point carry no type-B
/// interval.
pub fn classify_intervals(
    driver: &WzDriver,
    source: &SourceMaximal,
    eta: f64,
) -> Result<IntervalClassification, DiagnosticsError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!("eta = {eta} must be positive")));
    }
    let partition = driver.partition();
    let breaks = partition.breakpoints();
    let sups = driver.increment_sup_norms();
    let mut type_a = Vec::new();
    let mut type_a_spans = Vec::new();
    let mut type_b = Vec::new();
    let mut run_start: Option<f64> = None;
    for (j, &sup) in sups.iter().enumerate() {
        if sup >= eta {
            type_a.push(j);
            type_a_spans.push((breaks[j], breaks[j + 1]));
            if let Some(a) = run_start.take() {
                split_run(source, a, breaks[j], eta, &mut type_b);
            }
        } else if run_start.is_none() {
            run_start = Some(breaks[j]);
        }
    }
    if let Some(a) = run_start {
        split_run(source, a, 1.0, eta, &mut type_b);
    }
    Ok(IntervalClassification {
        eta,
        type_a,
        type_a_spans,
        type_b,
    })
}

fn split_run(source: &SourceMaximal, start: f64, end: f64, eta: f64, out: &mut Vec<TypeBInterval>) {
    let mut a = start;
    while a < end {
        let (b, budget) = source.stop(a, end, eta);
        out.push(TypeBInterval {
            start: a,
            end: b,
            budget,
            subtype: if budget >= eta / 2.0 { BSubtype::One } else { BSubtype::Two },
        });
        a = b;
    }
}

/// ‖v‖_{𝒳(t_j,t_{j+1})} / (1 + ‖Δ_jW‖_∞) for every partition interval.
pub fn crude_interval_ratios(traj: &Trajectory, driver: &WzDriver) -> Result<Vec<f64>, DiagnosticsError> {
    let sups = driver.increment_sup_norms();
    sups.iter()
        .enumerate()
        .map(|(j, sup)| {
            let (a, b) = driver.partition().interval(j)?;
            let norms = x_norms(traj, TimeInterval::new(a, b)?)?;
            Ok(norms.total() / (1.0 + sup))
        })
        .collect()
}

/// Worst crude-bound ratio over the partition intervals of one trajectory.
pub fn crude_interval_bound(traj: &Trajectory, driver: &WzDriver, ceiling: f64) -> Result<EstimateReport, DiagnosticsError> {
    let ratios = crude_interval_ratios(traj, driver)?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(EstimateReport::new(
        "crude_bound",
        format!("n={}", driver.partition().num_intervals()),
        ratios.len(),
        worst,
        ceiling,
    ))
}
