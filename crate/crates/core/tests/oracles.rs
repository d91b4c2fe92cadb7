use proptest::prelude::*;
use telelink::bsm::{teleport_conditional_state, OverlapModel};
use telelink::oracle::{
    coincidences_bruteforce, random_streams, run_oracle_case, teleport_bruteforce, ORACLE_CASES,
};
use telelink::polarization::{fidelity, PolarizationState};
use telelink::rng::substream;
use telelink::source::WernerState;
use telelink::timetag::{count_coincidences, CoincidenceWindow, TimeTag};
use telelink::tomography::TargetMap;

#[test]
fn every_oracle_case_passes() {
    for case in ORACLE_CASES {
        let r = run_oracle_case(case, 2024).unwrap();
        assert!(r.passed, "{case}: {r:?}");
    }
    assert!(run_oracle_case("nope", 1).is_err());
}

#[test]
fn ideal_fidelities_from_oracle() {
    // D with distinguishable photons is at the classical limit; H is not affected.
    let (rho, _) = teleport_bruteforce(&PolarizationState::d(), 1.0, 0.0).unwrap();
    assert!((fidelity(&rho, &PolarizationState::a()) - 0.5).abs() < 1e-12);
    let (rho, _) = teleport_bruteforce(&PolarizationState::h(), 1.0, 0.0).unwrap();
    assert!((fidelity(&rho, &PolarizationState::v()) - 1.0).abs() < 1e-12);
}

#[test]
fn herald_probability_for_mixed_input_is_quarter() {
    // Average over an orthonormal input basis is the maximally mixed input.
    for &(p, z) in &[(0.0, 0.0), (0.5, 0.3), (1.0, 1.0), (0.9, 0.7)] {
        let w = WernerState::new(p).unwrap();
        let ov = OverlapModel::new(z).unwrap();
        let ph = teleport_conditional_state(&PolarizationState::h(), w, ov)
            .unwrap()
            .1;
        let pv = teleport_conditional_state(&PolarizationState::v(), w, ov)
            .unwrap()
            .1;
        assert!(((ph + pv) / 2.0 - 0.25).abs() < 1e-12);
    }
}

#[test]
fn fidelity_monotonicity() {
    let targets = TargetMap::paper();
    let entries = targets.entries();
    let f = |i: usize, p: f64, z: f64| {
        let (rho, _) = teleport_conditional_state(
            &entries[i].0,
            WernerState::new(p).unwrap(),
            OverlapModel::new(z).unwrap(),
        )
        .unwrap();
        fidelity(&rho, &entries[i].1)
    };
    for k in 0..10 {
        let a = k as f64 / 10.0;
        let b = (k + 1) as f64 / 10.0;
        for i in 1..3 {
            assert!(f(i, 0.8, b) >= f(i, 0.8, a) - 1e-12);
            assert!(f(i, b, 0.8) >= f(i, a, 0.8) - 1e-12);
        }
        assert!(f(0, b, 0.5) >= f(0, a, 0.5) - 1e-12);
        assert!((f(0, 0.7, a) - f(0, 0.7, b)).abs() < 1e-12);
    }
}

#[test]
fn streaming_counter_matches_oracle_on_large_instances() {
    let mut rng = substream(9, "large");
    for _ in 0..5 {
        let streams = random_streams(&mut rng, &[1, 2, 3], 10_000, 2_000_000);
        let refs: Vec<&[TimeTag]> = streams.iter().map(|s| s.as_slice()).collect();
        let w = CoincidenceWindow::new(64, &[1, 2, 3]).unwrap();
        assert_eq!(
            count_coincidences(&refs, &w).unwrap(),
            coincidences_bruteforce(&refs, &w).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditional_state_is_physical(theta in 0.0..std::f64::consts::PI, phi in 0.0..6.3f64, p in 0.0..=1.0f64, z in 0.0..=1.0f64) {
        let input = PolarizationState::from_bloch(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()).unwrap();
        let (rho, prob) = teleport_conditional_state(&input, WernerState::new(p).unwrap(), OverlapModel::new(z).unwrap()).unwrap();
        prop_assert!(rho.is_physical(1e-10));
        prop_assert!((prob - 0.25).abs() < 1e-12);
        let (slow, _) = teleport_bruteforce(&input, p, z).unwrap();
        prop_assert!((rho.matrix() - slow.matrix()).iter().all(|d| d.norm() < 1e-10));
    }

    #[test]
    fn counter_equals_oracle(seed in any::<u64>(), n in 0usize..600, width in 1u64..300, fold in 2usize..=3) {
        let channels: Vec<u8> = (1..=fold as u8).collect();
        let mut rng = substream(seed, "prop");
        let streams = random_streams(&mut rng, &channels, n, (n as u64 + 1) * 50);
        let refs: Vec<&[TimeTag]> = streams.iter().map(|s| s.as_slice()).collect();
        let w = CoincidenceWindow::new(width, &channels).unwrap();
        prop_assert_eq!(count_coincidences(&refs, &w).unwrap(), coincidences_bruteforce(&refs, &w).unwrap());
    }
}
