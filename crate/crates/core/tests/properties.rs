use proptest::prelude::*;

use sovsim_core::dynamics::{advance, route_shares};
use sovsim_core::metrics::{decision_energy, p_irr_homogeneous, sovereign};
use sovsim_core::{
    generate_random_system, load_config, save_config, BoundaryConfig, DomainClass, ParameterRanges,
    SystemState,
};

fn random_state(seed: u64, n_human: usize, n_ai: usize) -> SystemState {
    generate_random_system(seed, n_human, n_ai, &ParameterRanges::default()).unwrap()
}

fn boundaries(bits: u8, epsilon: f64) -> BoundaryConfig {
    BoundaryConfig {
        b1_active: bits & 1 != 0,
        b2_active: bits & 2 != 0,
        b3_active: bits & 4 != 0,
        epsilon,
        erosion_rate: 0.05,
    }
}

/// A random state with the given boundary flags, rebuilt through the
/// validating constructor so structural boundaries are applied.
fn bounded_state(seed: u64, n_human: usize, n_ai: usize, b: BoundaryConfig) -> SystemState {
    let s = random_state(seed, n_human, n_ai);
    SystemState::new(s.nodes, b, s.economy, s.review_level, s.rng_seed).unwrap()
}

#[test]
fn generated_states_validate_for_a_thousand_seeds() {
    for seed in 0..1000 {
        let s = random_state(seed, 1 + (seed % 4) as usize, 1 + (seed % 3) as usize);
        s.validate().unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_round_trip(seed in 0..=i64::MAX as u64, h in 1usize..4, a in 1usize..4, bits in 0u8..8) {
        let s = bounded_state(seed, h, a, boundaries(bits, 0.01));
        let back = load_config(&save_config(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn step_invariants(seed in 0..=i64::MAX as u64, h in 1usize..4, a in 1usize..4, bits in 0u8..8, eps in 0.0f64..0.01) {
        let mut s = bounded_state(seed, h, a, boundaries(bits, eps));
        for _ in 0..30 {
            let (next, trace) = advance(&s).unwrap();
            let total: f64 = next.nodes.iter().map(|n| n.share).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            for (old, new) in s.nodes.iter().zip(&next.nodes) {
                prop_assert!(new.friction <= old.friction);
                prop_assert!(new.friction >= next.economy.friction_floor);
                prop_assert!(new.lambda >= old.lambda);
                if new.is_ai() && next.boundaries.b1_active {
                    prop_assert_eq!(new.authority[DomainClass::Irreversible], 0.0);
                }
                if new.is_ai() && next.boundaries.b2_active {
                    prop_assert!(!new.direct_control_critical);
                }
            }
            if next.boundaries.b3_active {
                for (id, out) in &trace.expansion {
                    let budget = s.node(*id).unwrap().expansion.approved_budget;
                    prop_assert!(out.granted <= next.boundaries.epsilon + budget);
                }
            }
            s = next;
        }
    }

    #[test]
    fn routing_rewards_higher_utility(
        us in prop::collection::vec(-5.0f64..5.0, 2..6),
        bump in 0.0f64..3.0,
        tau in 0.05f64..2.0,
    ) {
        let before = route_shares(&us, tau);
        let mut raised = us.clone();
        raised[0] += bump;
        let after = route_shares(&raised, tau);
        prop_assert!(after[0] >= before[0] - 1e-15);
        prop_assert!((after.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sovereign_is_invariant_to_rate_rescaling(seed in 0..=i64::MAX as u64, h in 1usize..4, a in 1usize..4, c in 0.01f64..100.0) {
        let s = bounded_state(seed, h, a, boundaries(0, 0.0));
        let mut scaled = s.clone();
        scaled.nodes.iter_mut().for_each(|n| n.lambda *= c);
        let (x, y) = (sovereign(&s), sovereign(&scaled));
        prop_assert_eq!(x.id, y.id);
        prop_assert_eq!(x.is_ai, y.is_ai);
    }

    #[test]
    fn decision_energy_is_linear_in_rate(seed in 0..=i64::MAX as u64, c in 0.0f64..100.0) {
        let s = random_state(seed, 1, 1);
        let w = s.economy.domain_weights;
        for n in &s.nodes {
            let mut m = n.clone();
            m.lambda *= c;
            let (e, ec) = (decision_energy(n, &w), decision_energy(&m, &w));
            prop_assert!((ec - c * e).abs() <= 1e-12 * (c * e).abs().max(1e-300));
        }
    }

    #[test]
    fn risk_grows_with_action_count(p in 1e-6f64..0.5, n in 1u64..100_000, extra in 1u64..1000) {
        let (a, b) = (p_irr_homogeneous(p, n), p_irr_homogeneous(p, n + extra));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
    }
}

#[test]
fn seeds_beyond_63_bits_are_rejected() {
    assert!(generate_random_system(u64::MAX, 1, 1, &ParameterRanges::default()).is_err());
}
