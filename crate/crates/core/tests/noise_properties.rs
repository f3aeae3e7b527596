use proptest::prelude::*;
use wzlab_core::grid::SpatialGrid;
use wzlab_core::noise::{build_standard_noise, BrownianEnsemble, ModeDescriptor, NoiseModel, Partition, WzDriver};

fn two_modes() -> NoiseModel {
    let g = SpatialGrid::new(128, 16.0).unwrap();
    build_standard_noise(
        &g,
        &[ModeDescriptor::new(0.5, -1.5, 1.0), ModeDescriptor::new(0.5, 1.5, 1.0)],
        3.0,
    )
    .unwrap()
}

#[test]
fn increments_have_variance_one_over_q() {
    // 64 paths × 1024 steps: the sample variance of Q·ΔB² has relative sd √(2/65536) ≈ 0.0055.
    let q = 1024;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_fourth = 0.0;
    let mut count = 0.0;
    for path in 0..64 {
        let e = BrownianEnsemble::generate(1, q, 99, path).unwrap();
        for d in e.increments(0) {
            let z = d * (q as f64).sqrt();
            sum += z;
            sum_sq += z * z;
            sum_fourth += z.powi(4);
            count += 1.0;
        }
    }
    let mean = sum / count;
    let var = sum_sq / count - mean * mean;
    assert!(mean.abs() < 4.0 / count.sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 4.0 * (2.0 / count).sqrt(), "var {var}");
    let kurtosis = sum_fourth / count;
    assert!((kurtosis - 3.0).abs() < 4.0 * (96.0 / count).sqrt(), "kurtosis {kurtosis}");
}

#[test]
fn modes_and_paths_are_independent_streams() {
    let e = BrownianEnsemble::generate(2, 4096, 5, 0).unwrap();
    let other = BrownianEnsemble::generate(2, 4096, 5, 1).unwrap();
    let corr = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt()
    };
    assert!(corr(e.increments(0), e.increments(1)).abs() < 4.0 / 64.0);
    assert!(corr(e.increments(0), other.increments(0)).abs() < 4.0 / 64.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn refinement_is_consistent(seed in any::<u64>(), path in 0u64..1000, coarse in 0u32..5) {
        // Increments on a coarse partition are sums of the fine ones.
        let model = two_modes();
        let q = 256;
        let e = BrownianEnsemble::generate(2, q, seed, path).unwrap();
        let n = 1usize << coarse;
        let coarse_driver = WzDriver::new(Partition::uniform(n, q).unwrap(), &e, &model).unwrap();
        let fine_driver = WzDriver::new(Partition::uniform(2 * n, q).unwrap(), &e, &model).unwrap();
        for j in 0..n {
            let c = coarse_driver.interval_increment(j).unwrap();
            let mut f = fine_driver.interval_increment(2 * j).unwrap();
            f.axpy(1.0, &fine_driver.interval_increment(2 * j + 1).unwrap());
            prop_assert!(c.sub(&f).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn increments_telescope_to_w1(seed in any::<u64>(), log_n in 0u32..9) {
        let model = two_modes();
        let q = 256;
        let e = BrownianEnsemble::generate(2, q, seed, 0).unwrap();
        let driver = WzDriver::new(Partition::uniform(1 << log_n, q).unwrap(), &e, &model).unwrap();
        let mut total = driver.interval_increment(0).unwrap();
        for j in 1..driver.partition().num_intervals() {
            total.axpy(1.0, &driver.interval_increment(j).unwrap());
        }
        let w1 = e.wiener_at(&model, 1.0).unwrap();
        prop_assert!(total.sub(&w1).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn generation_is_a_pure_function(seed in any::<u64>(), path in any::<u64>()) {
        let a = BrownianEnsemble::generate(2, 64, seed, path).unwrap();
        let b = BrownianEnsemble::generate(2, 64, seed, path).unwrap();
        prop_assert_eq!(a.increments(0), b.increments(0));
        prop_assert_eq!(a.increments(1), b.increments(1));
        prop_assert_eq!(a.path(0)[0], 0.0);
    }

    #[test]
    fn model_bookkeeping(amps in prop::collection::vec(0.05..0.4f64, 1..4)) {
        let g = SpatialGrid::new(256, 16.0).unwrap();
        let descs: Vec<_> = amps.iter().enumerate().map(|(i, &a)| ModeDescriptor::new(a, -3.0 + 2.0 * i as f64, 1.0)).collect();
        let m = build_standard_noise(&g, &descs, 10.0).unwrap();
        let sum: f64 = m.lambda_k().iter().sum();
        prop_assert!((m.lambda_noi() - sum).abs() <= 1e-12 * sum);
        for (i, lam) in m.lambda_k().iter().enumerate() {
            let v = &m.modes()[i];
            let expect = v.lp_norm(1.0).unwrap() + v.lp_norm(f64::INFINITY).unwrap();
            prop_assert!((lam - expect).abs() <= 1e-12 * expect);
        }
        for (x, v2) in m.v_squared().values().iter().enumerate() {
            let direct: f64 = m.modes().iter().map(|v| v.values()[x].powi(2)).sum();
            prop_assert!((v2 - direct).abs() <= 1e-12 * direct.max(1e-300));
        }
    }
}

#[test]
fn brownian_paths_are_holder_quarter_with_moderate_constant() {
    // E sup |B(t)-B(s)|/|t-s|^{1/4} over a 64-point grid stays O(1).
    let mut total = 0.0;
    for path in 0..64 {
        let e = BrownianEnsemble::generate(1, 64, 3, path).unwrap();
        let b = e.path(0);
        let mut best: f64 = 0.0;
        for i in 0..b.len() {
            for j in i + 1..b.len() {
                best = best.max((b[j] - b[i]).abs() / ((j - i) as f64 / 64.0).powf(0.25));
            }
        }
        total += best;
    }
    let mean = total / 64.0;
    assert!(mean > 0.5 && mean < 5.0, "{mean}");
}
