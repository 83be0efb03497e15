//! Property tests for the numeric invariants that hold on whole parameter
//! ranges rather than at pinned values.

use proptest::prelude::*;

use oclb::block::{rank_tuple, tuple_rank};
use oclb::chain::sample_chain;
use oclb::flattened::phi;
use oclb::q_factor;
use oclb::span::SpanState;
use oclb::{FiniteSum, ProblemParams};

proptest! {
    #[test]
    fn q_factor_unit_interval_and_monotone(
        kappa in 1.000001f64..1e6,
        growth in 1.1f64..10.0,
    ) {
        let q = q_factor(kappa).unwrap();
        prop_assert!((0.0..1.0).contains(&q));
        let q2 = q_factor(kappa * growth).unwrap();
        prop_assert!(q2 > q);
    }

    #[test]
    fn phi_sandwich_and_regions(r in 0.0f64..3.0, z in -10.0f64..10.0) {
        let (v, dv, ddv) = phi(r, z);
        let gap = z * z - v;
        prop_assert!(gap >= -1e-9 && gap <= 2.0 * r * r + 1e-9);
        prop_assert!((-1e-9..=4.0 + 1e-9).contains(&ddv));
        if z.abs() <= r {
            prop_assert_eq!(v, 0.0);
            prop_assert_eq!(dv, 0.0);
        }
        if z.abs() >= 2.0 * r {
            // Outer region: exact parabola shifted by the flattening deficit.
            prop_assert!((v - (z * z - 2.0 * r * r)).abs() <= 1e-12 * (1.0 + z * z));
            prop_assert!((dv - 2.0 * z).abs() <= 1e-12 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn phi_gradient_matches_finite_difference(r in 0.1f64..2.0, z in -5.0f64..5.0) {
        // Stay away from the two breakpoints where phi'' jumps.
        prop_assume!((z.abs() - r).abs() > 1e-3 && (z.abs() - 2.0 * r).abs() > 1e-3);
        let h = 1e-6;
        let (_, dv, _) = phi(r, z);
        let (vp, _, _) = phi(r, z + h);
        let (vm, _, _) = phi(r, z - h);
        let fd = (vp - vm) / (2.0 * h);
        prop_assert!((dv - fd).abs() <= 1e-5 * (1.0 + dv.abs()));
    }

    #[test]
    fn chain_components_average_to_objective(
        n in 2usize..6,
        d in 2usize..12,
        ratio in 1.5f64..80.0,
        seed in 0u64..1000,
        coords in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let params = ProblemParams::new(ratio, 1.0, n, d, 0.5).unwrap();
        let inst = sample_chain(&params, seed).unwrap();
        let w = &coords[..d];
        let avg: f64 = (1..=n)
            .map(|i| inst.component(i, w).unwrap().value)
            .sum::<f64>() / n as f64;
        let direct = inst.average_objective(w).unwrap();
        prop_assert!((avg - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn chain_optimum_is_stationary(
        n in 2usize..6,
        d in 2usize..30,
        ratio in 1.5f64..80.0,
        seed in 0u64..1000,
    ) {
        let params = ProblemParams::new(ratio, 1.0, n, d, 0.5).unwrap();
        let inst = sample_chain(&params, seed).unwrap();
        let g = inst.full_gradient(&inst.closed_form_optimum()).unwrap();
        prop_assert!(g.iter().all(|x| x.abs() <= 1e-8));
    }

    #[test]
    fn span_state_monotone_and_capped(
        n in 2usize..8,
        d in 2usize..20,
        steps in prop::collection::vec(0usize..8, 0..15),
        owner_draws in prop::collection::vec(0usize..8, 19),
    ) {
        let owners: Vec<usize> = owner_draws[..d - 1].iter().map(|k| k % n + 1).collect();
        let mut state = SpanState::new(n, d);
        let mut prev = state.ell();
        for raw in steps {
            state.advance(raw % n + 1, &owners);
            prop_assert!(state.ell() >= prev && state.ell() <= d - 1);
            prev = state.ell();
        }
    }

    #[test]
    fn tuple_rank_roundtrip(n in 2usize..5, d in 2usize..5, raw in 0usize..1000) {
        let count = n.pow(d as u32 - 1);
        let rank = raw % count;
        let tuple = rank_tuple(rank, n, d).unwrap();
        prop_assert_eq!(tuple.len(), d - 1);
        prop_assert!(tuple.iter().all(|&j| (1..=n).contains(&j)));
        prop_assert_eq!(tuple_rank(&tuple, n).unwrap(), rank);
    }
}
