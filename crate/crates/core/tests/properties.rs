use proptest::prelude::*;

use silt_core::config::ExperimentConfig;
use silt_core::green::green_torus;
use silt_core::lattice::{conjugate_exponent, p_norm};
use silt_core::model::{dirichlet_form_torus, ModelParams, TorusLaw};
use silt_core::output::sig12;
use silt_core::rng::{substream, Stream};
use silt_core::variational::{solve_rho1, SolverOptions};
use silt_core::walk::{fold_field, random_field, silt, simulate_local_times, StopRule, WalkSampler};

fn torus(d: usize, alpha: f64, side: usize) -> TorusLaw {
    TorusLaw::from_params(ModelParams::new(d, alpha, 2.0).unwrap(), side, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conjugate_exponents_are_dual(p in 1.01f64..50.0) {
        let c = conjugate_exponent(p);
        prop_assert!((1.0 / p + 1.0 / c - 1.0).abs() < 1e-12);
        prop_assert!((conjugate_exponent(c) - p).abs() < 1e-9 * p);
    }

    #[test]
    fn p_norms_are_homogeneous_and_decreasing(
        v in prop::collection::vec(-10.0f64..10.0, 1..20),
        c in -5.0f64..5.0,
        p in 1.0f64..6.0,
    ) {
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let a = p_norm(&scaled, p);
        let b = c.abs() * p_norm(&v, p);
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b));
        prop_assert!(p_norm(&v, p + 1.0) <= p_norm(&v, p) * (1.0 + 1e-12));
    }

    #[test]
    fn clock_is_conserved(side in 1usize..12, t in 0.1f64..60.0, seed in any::<u64>(), replica in 0u64..1000) {
        let law = torus(1, 0.5, side);
        let sampler = WalkSampler::torus(&law).unwrap();
        let (field, _) = simulate_local_times(&sampler, StopRule::Fixed { t }, seed, replica).unwrap();
        prop_assert!((field.total() - t).abs() <= 1e-9);
        let v = silt(&field, 2.0).unwrap();
        prop_assert!(v.within_pathwise_bounds(field.n_sites()));
    }

    #[test]
    fn folding_keeps_mass_and_raises_silt(seed in any::<u64>(), side in 1usize..9, q in 1.0f64..4.0) {
        let mut rng = substream(seed, 0, Stream::Aux);
        let free = random_field(2, 40, 12, &mut rng);
        let folded = fold_field(&free, side).unwrap();
        prop_assert!((folded.total() - free.total()).abs() <= 1e-10 * free.total());
        let a = silt(&free, q).unwrap().value;
        let b = silt(&folded, q).unwrap().value;
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn torus_law_is_symmetric_probability(d in 1usize..3, alpha in 0.2f64..1.9, side in 1usize..9) {
        let law = torus(d, alpha, side);
        let total: f64 = law.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for i in 0..law.len() {
            let neg = law.torus.sub(0, i);
            prop_assert!((law.weights[i] - law.weights[neg]).abs() < 1e-14);
            prop_assert!(law.weights[i] >= 0.0);
        }
    }

    #[test]
    fn green_row_sums_and_diagonal(d in 1usize..3, alpha in 0.2f64..1.9, side in 1usize..9, lambda in 0.05f64..5.0) {
        let g = green_torus(&torus(d, alpha, side), lambda).unwrap();
        prop_assert!((g.row_sum() - 1.0 / lambda).abs() <= 1e-10 * (1.0 / lambda).max(1.0));
        prop_assert!(g.at_origin() <= 1.0 / lambda * (1.0 + 1e-12));
        prop_assert!(g.values.iter().all(|v| *v > 0.0));
        prop_assert!(g.min_eigenvalue() > 0.0);
    }

    #[test]
    fn dirichlet_form_is_nonnegative(seed in any::<u64>(), side in 1usize..10, shift in -3.0f64..3.0) {
        let law = torus(1, 0.7, side);
        let mut rng = substream(seed, 0, Stream::Aux);
        let f: Vec<f64> = (0..law.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let e = dirichlet_form_torus(&law, &f).unwrap();
        prop_assert!(e >= -1e-14);
        let moved: Vec<f64> = f.iter().map(|v| v + shift).collect();
        let e2 = dirichlet_form_torus(&law, &moved).unwrap();
        prop_assert!((e - e2).abs() <= 1e-10 * (1.0 + e));
    }

    #[test]
    fn sig12_round_trips(x in -1e30f64..1e30) {
        let back: f64 = sig12(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-12 * x.abs());
    }

    #[test]
    fn out_of_range_alpha_is_named(alpha in 2.0001f64..10.0) {
        let text = format!("command = \"model\"\n[params.model]\nalpha = {alpha}\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        prop_assert!(err.contains("params.model.alpha"), "{}", err);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rho1_sandwich(side in 1usize..10, lambda in 0.1f64..2.0, q in 1.5f64..4.0) {
        let g = green_torus(&torus(1, 0.5, side), lambda).unwrap();
        let opts = SolverOptions { starts: 3, cross_check: false, ..SolverOptions::default() };
        let r = solve_rho1(&g, q, &opts).unwrap();
        let g00 = g.at_origin();
        prop_assert!(r.value >= g00 * (1.0 - 1e-12));
        prop_assert!(r.value <= (side as f64).powf(1.0 / q) * g00 * (1.0 + 1e-12));
    }
}
