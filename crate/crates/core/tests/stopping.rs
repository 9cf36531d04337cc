use awsde_core::bicausal::fixtures::martingale_pair;
use awsde_core::bicausal::random::random_tree;
use awsde_core::bicausal::{mass, rational};
use awsde_core::stopping::{
    snell_value, snell_value_by_enumeration, stopping_stability_gap, Objective, PathPayoff, ENUMERATION_NODE_CAP,
};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_separable<R: Rng>(rng: &mut R, stages: usize, p: f64, objective: Objective) -> PathPayoff {
    let terms = (0..stages)
        .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)))
        .collect();
    PathPayoff::separable(terms, p, objective)
}

#[test]
fn stability_bound_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for i in 0..120 {
        let stages = 1 + i % 3;
        let p = [1.0, 2.0, 3.0][i % 3];
        let objective = if i % 2 == 0 { Objective::Sup } else { Objective::Inf };
        let mu = random_tree(&mut rng, stages, 3, 4);
        let nu = random_tree(&mut rng, stages, 3, 4);
        let payoffs = [
            random_separable(&mut rng, stages, p, objective),
            PathPayoff::coordinate(p, objective),
            PathPayoff::asian(0.5, 0.25, stages, p, objective),
        ];
        for payoff in &payoffs {
            payoff.check_lipschitz(stages, 2000, i as u64).unwrap();
            let gap = stopping_stability_gap(&mu, &nu, payoff, p).unwrap();
            assert!(gap.holds(), "instance {i} payoff {}: {gap:?}", payoff.name);
            checked += 1;
        }
    }
    assert!(checked >= 100);
}

#[test]
fn martingale_pair_values() {
    for eps in [0.1, 0.3] {
        let (x, y) = martingale_pair(eps);
        let payoff = PathPayoff::coordinate(1.0, Objective::Sup);
        assert_eq!(snell_value(&x, &payoff), rational(0.0));
        let expected = (BigRational::from_integer(1.into()) - rational(eps)) / BigRational::from_integer(2.into());
        assert_eq!(snell_value(&y, &payoff), expected);
        let gap = stopping_stability_gap(&x, &y, &payoff, 1.0).unwrap();
        assert!(gap.holds());
        assert!((gap.aw_pp - (eps + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn exponent_mismatch_is_rejected() {
    let (x, y) = martingale_pair(0.1);
    assert!(stopping_stability_gap(&x, &y, &PathPayoff::coordinate(2.0, Objective::Sup), 1.0).is_err());
}

#[test]
fn enumeration_refuses_large_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let big = loop {
        let t = random_tree(&mut rng, 3, 3, 4);
        if t.len() > ENUMERATION_NODE_CAP {
            break t;
        }
    };
    assert!(snell_value_by_enumeration(&big, &PathPayoff::coordinate(1.0, Objective::Sup)).is_err());
}

proptest! {
    #[test]
    fn backward_induction_matches_enumeration(seed in any::<u64>(), stages in 1usize..4, sup in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, stages, 2, 4);
        prop_assume!(tree.len() <= ENUMERATION_NODE_CAP);
        let objective = if sup { Objective::Sup } else { Objective::Inf };
        let payoff = random_separable(&mut rng, stages, 1.0, objective);
        prop_assert_eq!(snell_value(&tree, &payoff), snell_value_by_enumeration(&tree, &payoff).unwrap());
    }

    #[test]
    fn negation_flips_the_value(seed in any::<u64>(), stages in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, stages, 3, 4);
        let payoff = random_separable(&mut rng, stages, 2.0, Objective::Sup);
        prop_assert_eq!(snell_value(&tree, &payoff), -snell_value(&tree, &payoff.negated()));
    }

    #[test]
    fn stopping_is_at_least_the_best_fixed_time(seed in any::<u64>(), stages in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, stages, 3, 4);
        let payoff = random_separable(&mut rng, stages, 1.0, Objective::Sup);
        let v = snell_value(&tree, &payoff);
        for k in 1..=stages {
            let fixed: BigRational = tree
                .level(k)
                .map(|i| tree.joint_mass(i) * rational(payoff.eval(k, &tree.prefix(i))))
                .sum();
            prop_assert!(v >= fixed);
        }
    }
}

#[test]
fn one_point_law_stops_at_the_best_time() {
    let tree = awsde_core::bicausal::FiniteAdaptedProcess::from_paths(3, &[(vec![1.0, 3.0, 2.0], mass(1, 1))]).unwrap();
    let payoff = PathPayoff::coordinate(1.0, Objective::Sup);
    assert_eq!(snell_value(&tree, &payoff), rational(3.0));
    assert_eq!(snell_value(&tree, &payoff.negated()), rational(-3.0));
    let inf = PathPayoff::coordinate(1.0, Objective::Inf);
    assert_eq!(snell_value(&tree, &inf), rational(1.0));
}
