use num_complex::Complex64;
use proptest::prelude::*;
use wzlab_core::dynamics::{evolve, InitialData, Records, SolverSpec, Trajectory};
use wzlab_core::grid::{ComplexField, SpatialGrid};
use wzlab_core::noise::{build_standard_noise, BrownianEnsemble, ModeDescriptor};
use wzlab_core::spacetime::{difference_norms, x1_norm, x2_fifth_power, x_norm, TimeInterval};

fn sample_trajectory(seed: u64) -> Trajectory {
    let g = SpatialGrid::new(64, 16.0).unwrap();
    let m = build_standard_noise(&g, &[ModeDescriptor::new(0.5, 0.0, 1.0)], 3.0).unwrap();
    let f = InitialData::default().sample(&g, 0, 0);
    let e = BrownianEnsemble::generate(1, 128, seed, 0).unwrap();
    evolve(&f, &m, &e, &SolverSpec::limit().with_records(Records::Uniform(32))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn norms_split_over_adjacent_intervals(seed in any::<u64>(), a in 0usize..32, b in 0usize..32, c in 0usize..32) {
        let mut cuts = [a, b, c];
        cuts.sort();
        prop_assume!(cuts[0] < cuts[1] && cuts[1] < cuts[2]);
        let traj = sample_trajectory(seed);
        let t = |i: usize| i as f64 / 32.0;
        let whole = TimeInterval::new(t(cuts[0]), t(cuts[2])).unwrap();
        let left = TimeInterval::new(t(cuts[0]), t(cuts[1])).unwrap();
        let right = TimeInterval::new(t(cuts[1]), t(cuts[2])).unwrap();
        let fifth = x2_fifth_power(&traj, whole).unwrap();
        let split = x2_fifth_power(&traj, left).unwrap() + x2_fifth_power(&traj, right).unwrap();
        prop_assert!((fifth - split).abs() <= 1e-12 * fifth);
        prop_assert!(x_norm(&traj, whole).unwrap() <= (x_norm(&traj, left).unwrap() + x_norm(&traj, right).unwrap()) * (1.0 + 1e-12));
        let sup = x1_norm(&traj, whole).unwrap();
        prop_assert_eq!(sup, x1_norm(&traj, left).unwrap().max(x1_norm(&traj, right).unwrap()));
    }

    #[test]
    fn difference_norms_obey_the_triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = sample_trajectory(s1);
        let b = sample_trajectory(s2);
        let zero = a.scaled(0.0);
        let ab = difference_norms(&a, &b).unwrap();
        let a0 = difference_norms(&a, &zero).unwrap();
        let b0 = difference_norms(&b, &zero).unwrap();
        prop_assert!(ab.x1 <= (a0.x1 + b0.x1) * (1.0 + 1e-12));
        prop_assert!(ab.x2 <= (a0.x2 + b0.x2) * (1.0 + 1e-12));
        prop_assert!((a0.total() - x_norm(&a, TimeInterval::unit()).unwrap()).abs() <= 1e-12 * a0.total());
    }
}

#[test]
fn quadrature_of_a_known_time_profile() {
    // u(t) = (1 + t)·e^{-x²/2}: ‖u(t)‖⁵_{L¹⁰} = (1+t)⁵·c with c = (π/5)^{1/4},
    // so the 𝒳₂ fifth power over [0, 1] is c·63/6.
    let g = SpatialGrid::new(512, 16.0).unwrap();
    let base = ComplexField::from_fn(g.clone(), |x| Complex64::new((-x * x / 2.0).exp(), 0.0));
    let c = (std::f64::consts::PI / 5.0).sqrt().sqrt();
    assert!((base.lp_norm(10.0).unwrap().powi(5) - c).abs() < 1e-12);
    let steps = 4096;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let fields = times.iter().map(|t| base.scale(Complex64::new(1.0 + t, 0.0))).collect();
    let traj = Trajectory::from_fields(times, fields);
    let fifth = x2_fifth_power(&traj, TimeInterval::unit()).unwrap();
    // Trapezoid error for (1+t)⁵ is h²/12·∫ 20(1+t)³ dt ≈ 1.5e-7·c relative.
    assert!((fifth - c * 63.0 / 6.0).abs() <= 1e-6 * c, "{fifth}");
    assert!((x1_norm(&traj, TimeInterval::unit()).unwrap() - 2.0 * std::f64::consts::PI.powf(0.25)).abs() < 1e-10);
}
