use proptest::prelude::*;
use rand::Rng;
use telelink::config::LinkConfig;
use telelink::polarization::{stokes_to_rho, PolarizationState, StokesVector};
use telelink::process::poisson_count;
use telelink::rng::substream;
use telelink::tomography::{
    fidelity_with_mc, reconstruct, stokes_from_values, BasisCounts, NamedState,
};

fn random_stokes<R: Rng>(rng: &mut R) -> StokesVector {
    loop {
        let s = StokesVector::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if s.norm() <= 1.0 {
            return s;
        }
    }
}

fn poisson_counts<R: Rng>(means: &[f64; 6], rng: &mut R) -> BasisCounts {
    let mut c = BasisCounts::default();
    for (s, m) in NamedState::ALL.iter().zip(means) {
        c.set(*s, poisson_count(*m, rng));
    }
    c
}

proptest! {
    #[test]
    fn born_values_reconstruct_exactly(x in -0.57..0.57f64, y in -0.57..0.57f64, z in -0.57..0.57f64, n in 1.0..1e6f64) {
        let rho = stokes_to_rho(StokesVector::new(x, y, z));
        let s = stokes_from_values(&BasisCounts::born(&rho, n)).unwrap();
        let back = stokes_to_rho(s);
        prop_assert!((back.matrix() - rho.matrix()).iter().all(|d| d.norm() < 1e-10));
    }
}

#[test]
fn poisson_reconstruction_within_trace_distance() {
    let mut rng = substream(21, "tomo-trace");
    let trials = 1000;
    let mut good = 0;
    for _ in 0..trials {
        let rho = stokes_to_rho(random_stokes(&mut rng));
        let c = poisson_counts(&BasisCounts::born(&rho, 1e4), &mut rng);
        let r = reconstruct(&c).unwrap();
        if r.rho.trace_distance(&rho) < 0.03 {
            good += 1;
        }
    }
    assert!(good as f64 >= 0.95 * trials as f64, "{good}/{trials}");
}

fn mc_sigma(n: f64, seed: u64) -> f64 {
    let rho = stokes_to_rho(StokesVector::new(0.3, -0.4, 0.5));
    let target = PolarizationState::from_bloch(0.6, -0.48, 0.64).unwrap();
    let means = BasisCounts::born(&rho, n);
    let mut c = BasisCounts::default();
    for (s, m) in NamedState::ALL.iter().zip(&means) {
        c.set(*s, m.round() as u64);
    }
    fidelity_with_mc(&c, &target, 10_000, &mut substream(seed, "mc"))
        .unwrap()
        .1
}

#[test]
fn monte_carlo_sigma_has_inverse_sqrt_slope() {
    let ns: [f64; 4] = [1e2, 1e3, 1e4, 1e5];
    let pts: Vec<(f64, f64)> = ns.iter().map(|&n| (n.ln(), mc_sigma(n, 2).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() <= 0.05, "slope {slope}");
}

#[test]
fn quadrupled_counts_halve_sigma() {
    let ratio = mc_sigma(2_500.0, 3) / mc_sigma(10_000.0, 3);
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn default_trial_count() {
    let cfg = LinkConfig::bundled("local").unwrap();
    assert_eq!(cfg.mc_trials, 10_000);
    let without = cfg.to_toml().unwrap().replace("mc_trials = 10000\n", "");
    assert_eq!(LinkConfig::from_toml(&without).unwrap().mc_trials, 10_000);
}
