use camp::bench::SweepConfig;
use camp::denoise::{divergence_mean, soft_threshold};
use camp::model::{fwht, geometric_singular_values, sample_partial_hadamard};
use camp::spectral::{asymptotic_moments_geometric, tap_recursion};
use camp::{SensingEnsemble, TapTable};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn soft_threshold_is_odd_and_lipschitz(x in -50.0..50.0f64, y in -50.0..50.0f64, theta in 0.0..10.0f64) {
        prop_assert_eq!(soft_threshold(-x, theta), -soft_threshold(x, theta));
        prop_assert!((soft_threshold(x, theta) - soft_threshold(y, theta)).abs() <= (x - y).abs() + 1e-12);
        prop_assert!(soft_threshold(x, theta).abs() <= x.abs());
    }

    #[test]
    fn divergence_is_a_fraction(v in prop::collection::vec(-5.0..5.0f64, 1..200), theta in 0.0..3.0f64) {
        let d = divergence_mean(&v, theta);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn fwht_is_an_involution(log_n in 0u32..8, seed in any::<u64>()) {
        use rand::Rng;
        let n = 1usize << log_n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orig: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut v = orig.clone();
        fwht(&mut v);
        fwht(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hadamard_ensemble_adjoint_is_consistent(log_n in 2u32..8, frac in 0.2..1.0f64, kappa in 1.0..100.0f64, seed in any::<u64>()) {
        use rand::Rng;
        let n = 1usize << log_n;
        let m = ((frac * n as f64).round() as usize).clamp(2, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = geometric_singular_values(m, n, kappa).unwrap();
        let a = sample_partial_hadamard(m, n, &sigma, &mut rng).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&a.forward(&x), &z);
        let rhs = dot(&x, &a.adjoint(&z));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gaussian_ensemble_adjoint_is_consistent(m in 1usize..20, extra in 0usize..20, seed in any::<u64>()) {
        use rand::Rng;
        let n = m + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = SensingEnsemble::iid_gaussian(m, n, 0.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&a.forward(&x), &z);
        let rhs = dot(&x, &a.adjoint(&z));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tap_table_text_round_trips(delta in 0.1..1.0f64, kappa in 1.5..50.0f64, horizon in 1usize..12) {
        let p = asymptotic_moments_geometric(delta, kappa, horizon + 2).unwrap();
        let table = tap_recursion(&p, horizon).unwrap();
        let back = TapTable::from_text(&table.to_text()).unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn config_text_round_trips(
        log_n in 1u32..14,
        frac in 0.0..1.0f64,
        density in 0.01..1.0f64,
        snr in -10.0..60.0f64,
        kappas in prop::collection::vec(1.0..1e4f64, 1..5),
        grid in prop::collection::vec(0.0..5.0f64, 1..8),
        seed in any::<u64>(),
    ) {
        let n = 1usize << log_n;
        let m = 2 + (frac * (n - 2) as f64) as usize;
        let cfg = SweepConfig {
            m,
            n,
            density,
            snr_db: snr,
            condition_numbers: kappas,
            theta_grid: grid,
            master_seed: seed,
            ..Default::default()
        };
        let back = SweepConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
