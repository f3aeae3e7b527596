use proptest::prelude::*;
use wzlab_cli::RunConfig;

fn overrides() -> impl Strategy<Value = Vec<String>> {
    (
        1usize..200,
        any::<u64>(),
        prop::collection::vec(0.5..50.0f64, 0..3),
        0.1..1.4f64,
        prop::collection::vec((0.05..0.3f64, -2.0..2.0f64, 0.25..1.5f64), 0..3),
        any::<bool>(),
        0.1..0.9f64,
    )
        .prop_map(|(paths, seed, ms, amp, modes, check, eta)| {
            let mut m_list: Vec<String> = ms.iter().map(|m| format!("{m}")).collect();
            m_list.push("inf".into());
            let modes: Vec<String> = modes.iter().map(|(a, c, w)| format!("{a}:{c}:{w}")).collect();
            vec![
                format!("paths = {}", paths.max(2)),
                format!("seed = {seed}"),
                format!("m_list = {}", m_list.join(", ")),
                format!("initial = gaussian:{amp}"),
                format!("modes = {}", modes.join(", ")),
                format!("reference_check = {check}"),
                format!("diag.eta = {eta}"),
            ]
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_then_parse_is_identity(sets in overrides()) {
        let config = RunConfig::parse_with_overrides("", "x", &sets).unwrap();
        let text = config.to_flat();
        let back = RunConfig::parse(&text, "roundtrip").unwrap();
        prop_assert_eq!(&back, &config);
        prop_assert_eq!(back.to_flat(), text);
        prop_assert_eq!(back.fingerprint(), config.fingerprint());
    }
}
