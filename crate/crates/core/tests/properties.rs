//! Property tests for the cross-cutting invariants.

use mixclt::blocks::{build_bounded_summand, build_two_step};
use mixclt::mixing::{
    alpha_exact_enumerated, phi_exact_enumerated, phi_markov_reduced, FiniteChainSpec,
    StochasticMatrix, DEFAULT_ENUMERATION_BUDGET,
};
use mixclt::processes::{
    exact_cov, generate, polynomial_mixing_schedule, BaseDist, PostMap, ProcessSpec,
    ScaleSchedule, DEFAULT_LEDGER_ENTRY_BUDGET,
};
use mixclt::statistics::{
    eval_u_statistic, function_of_mean_path, studentized_path, u_remainder_naive, u_remainder_path,
    SmoothMap, UKernel,
};
use proptest::prelude::*;

/// A random row-stochastic matrix of dimension `s` from positive weights.
fn matrix_strategy(s: usize) -> impl Strategy<Value = StochasticMatrix> {
    proptest::collection::vec(0.02f64..1.0, s * s).prop_map(move |weights| {
        let rows: Vec<f64> = weights
            .chunks(s)
            .flat_map(|row| {
                let total: f64 = row.iter().sum();
                row.iter().map(|w| w / total).collect::<Vec<_>>()
            })
            .collect();
        StochasticMatrix::new(s, rows).expect("normalized")
    })
}

fn chain_strategy() -> impl Strategy<Value = FiniteChainSpec> {
    (2usize..=3, 3usize..=5).prop_flat_map(|(s, horizon)| {
        let law = proptest::collection::vec(0.05f64..1.0, s).prop_map(|w| {
            let total: f64 = w.iter().sum();
            w.into_iter().map(|v| v / total).collect::<Vec<_>>()
        });
        let steps = proptest::collection::vec(matrix_strategy(s), horizon - 1);
        (law, steps).prop_map(|(law, steps)| FiniteChainSpec::new(law, steps).expect("valid"))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn markov_reduction_agrees_with_enumeration(chain in chain_strategy(), m in 1usize..3) {
        prop_assume!(m < chain.horizon());
        let enumerated = phi_exact_enumerated(&chain, m, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let reduced = phi_markov_reduced(&chain, m).unwrap();
        prop_assert!((enumerated - reduced).abs() <= 1e-10);
    }

    #[test]
    fn exact_phi_profile_is_monotone(chain in chain_strategy()) {
        let mut prev = 1.0f64;
        for m in 1..chain.horizon() {
            let phi = phi_markov_reduced(&chain, m).unwrap();
            prop_assert!(phi <= prev + 1e-10, "phi({m}) = {phi} > phi({}) = {prev}", m - 1);
            prev = phi;
        }
    }

    #[test]
    fn alpha_at_most_half_phi(chain in chain_strategy(), m in 1usize..3) {
        prop_assume!(m < chain.horizon());
        let phi = phi_exact_enumerated(&chain, m, DEFAULT_ENUMERATION_BUDGET).unwrap();
        let alpha = alpha_exact_enumerated(&chain, m).unwrap();
        prop_assert!(alpha <= 0.5 * phi + 1e-12);
    }

    #[test]
    fn u_statistic_t_is_s_plus_r_and_reversal_invariant(
        values in proptest::collection::vec(-3.0f64..3.0, 4..24),
        c in -1.0f64..1.0,
    ) {
        for kernel in [UKernel::Product, UKernel::Sum, UKernel::ProductMinus { c }] {
            let fast = u_remainder_path(&kernel, &values);
            let slow = u_remainder_naive(&kernel, &values);
            prop_assert!((fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()));
            let mut reversed = values.clone();
            reversed.reverse();
            let direct = u_remainder_naive(&kernel, &reversed);
            prop_assert!((slow - direct).abs() <= 1e-9 * (1.0 + slow.abs()));
        }
    }

    #[test]
    fn studentized_is_always_finite(
        values in proptest::collection::vec(-5.0f64..5.0, 2..40),
        m in 1usize..6,
    ) {
        let t = studentized_path(&values, m);
        prop_assert!(t.is_finite());
    }

    #[test]
    fn function_of_mean_decomposition_is_exact(
        values in proptest::collection::vec(-2.0f64..2.0, 6..30),
        a in -2.0f64..2.0,
        q in -1.0f64..1.0,
    ) {
        let map = SmoothMap { linear: vec![a], quadratic: vec![vec![q]] };
        let stat = function_of_mean_path(&map, &values, 1);
        prop_assert!((stat.t - (stat.s + stat.r)).abs() <= 1e-12 * (1.0 + stat.t.abs()));
        // Linear maps have no remainder.
        let linear_map = SmoothMap { linear: vec![a], quadratic: vec![vec![0.0]] };
        prop_assert_eq!(function_of_mean_path(&linear_map, &values, 1).r, 0.0);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 2usize..24, paths in 1usize..8) {
        let spec = ProcessSpec::ScaledSchedule {
            inner: Box::new(ProcessSpec::MDependent {
                base: BaseDist::Normal,
                weights: vec![1.0, 0.6],
                post_map: PostMap::Identity,
            }),
            schedule: ScaleSchedule::Affine { intercept: 1.0, slope: 0.5 },
        };
        let a = generate(&spec, n, paths, seed).unwrap();
        let b = generate(&spec, n, paths, seed).unwrap();
        for p in 0..paths {
            prop_assert_eq!(a.path(p), b.path(p));
        }
    }

    #[test]
    fn certified_profile_stays_under_envelope(p in 1.2f64..4.0, k in 0.1f64..2.0) {
        let spec = polynomial_mixing_schedule(p, k, 8).unwrap();
        let profile = spec.certified_phi_profile(64, 10).unwrap();
        for (m, v) in profile.iter() {
            prop_assert!(v <= k * f64::from(m).powf(-p) + 1e-12, "lag {m}: {v}");
        }
    }

    #[test]
    fn partitions_cover_and_are_disjoint(
        n in 8usize..64,
        tau10 in 10u32..40,
        heavy in proptest::collection::vec(any::<bool>(), 8..64),
    ) {
        let tau = f64::from(tau10) / 10.0;
        let spec = ProcessSpec::Iid { base: BaseDist::Normal };
        let ledger = exact_cov(&spec, n, DEFAULT_LEDGER_ENTRY_BUDGET).unwrap();
        let moments: Vec<f64> = (0..n)
            .map(|j| if *heavy.get(j).unwrap_or(&false) { tau * 2.0 } else { 0.5 })
            .collect();
        let two_step = build_two_step(&ledger, &moments, tau).unwrap();
        prop_assert!(two_step.covers(n));
        let bounded = build_bounded_summand(&ledger, tau).unwrap();
        prop_assert!(bounded.covers(n));
    }

    #[test]
    fn u_statistic_batch_decomposition(seed in any::<u64>()) {
        let spec = ProcessSpec::Iid { base: BaseDist::Uniform { half_width: 1.0 } };
        let batch = generate(&spec, 12, 16, seed).unwrap();
        for stat in eval_u_statistic(&batch, &UKernel::Product).unwrap() {
            prop_assert!((stat.t - (stat.s + stat.r)).abs() <= 1e-12 * (1.0 + stat.t.abs()));
        }
    }
}
