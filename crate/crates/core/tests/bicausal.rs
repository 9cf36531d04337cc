use awsde_core::bicausal::fixtures::{kr_suboptimal_pair, martingale_pair};
use awsde_core::bicausal::random::{random_comonotone_pair, random_tree};
use awsde_core::bicausal::{
    antitone_then_monotone, check_quasi_monotone, check_stochastic_monotone, exact_bicausal_value, knothe_rosenblatt,
    mass, plan_cost, rational, CostFunctional, DominanceOrder, FiniteAdaptedProcess, Mass, Monotonicity, TreeDocument,
};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn int(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

/// North-west corner coupling of two ordered marginals.
fn quantile_coupling(rows: &[Mass], cols: &[Mass]) -> Vec<(usize, usize, Mass)> {
    let (mut r, mut c) = (rows.to_vec(), cols.to_vec());
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < r.len() && j < c.len() {
        let m = r[i].clone().min(c[j].clone());
        if !m.is_zero() {
            out.push((i, j, m.clone()));
        }
        r[i] -= &m;
        c[j] -= &m;
        if r[i].is_zero() {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Coupling of the children of `a` and `b`, antitone when asked.
fn vertex_coupling(
    mu: &FiniteAdaptedProcess,
    nu: &FiniteAdaptedProcess,
    a: usize,
    b: usize,
    antitone: bool,
) -> Vec<(usize, usize, Mass)> {
    let rows: Vec<usize> = mu.children(a).to_vec();
    let mut cols: Vec<usize> = nu.children(b).to_vec();
    if antitone {
        cols.reverse();
    }
    let rm: Vec<Mass> = rows.iter().map(|&i| mu.node(i).mass.clone()).collect();
    let cm: Vec<Mass> = cols.iter().map(|&j| nu.node(j).mass.clone()).collect();
    quantile_coupling(&rm, &cm).into_iter().map(|(i, j, m)| (rows[i], cols[j], m)).collect()
}

fn walk_cost(
    mu: &FiniteAdaptedProcess,
    nu: &FiniteAdaptedProcess,
    cost: &CostFunctional,
    choice: &dyn Fn(usize, usize) -> bool,
    a: usize,
    b: usize,
    joint: &Mass,
) -> BigRational {
    let mut total = BigRational::zero();
    if mu.children(a).is_empty() {
        return total;
    }
    for (i, j, m) in vertex_coupling(mu, nu, a, b, choice(a, b)) {
        let jm = joint * &m;
        let (x, y) = (mu.node(i).value, nu.node(j).value);
        total += &jm * cost.exact(mu.node(i).depth, x, y);
        total += walk_cost(mu, nu, cost, choice, i, j, &jm);
    }
    total
}

/// Minimum over every assignment of monotone or antitone couplings to the
/// same-depth node pairs. With at most two children per node these are the
/// vertices of each inner transport polytope, so the minimum is the exact
/// bicausal value.
fn vertex_enumeration(mu: &FiniteAdaptedProcess, nu: &FiniteAdaptedProcess, cost: &CostFunctional) -> BigRational {
    let mut pairs = Vec::new();
    for depth in 0..mu.stages() {
        for a in mu.level(depth) {
            for b in nu.level(depth) {
                pairs.push((a, b));
            }
        }
    }
    assert!(pairs.len() <= 16);
    let mut best: Option<BigRational> = None;
    for bits in 0u32..(1 << pairs.len()) {
        let choice = |a: usize, b: usize| {
            let idx = pairs.iter().position(|&p| p == (a, b)).expect("pair listed");
            bits >> idx & 1 == 1
        };
        let v = walk_cost(mu, nu, cost, &choice, mu.root(), nu.root(), &Mass::one());
        if best.as_ref().is_none_or(|b| v < *b) {
            best = Some(v);
        }
    }
    best.expect("at least one assignment")
}

#[test]
fn stagewise_monotone_plan_is_suboptimal_on_fixture() {
    let (mu, nu) = kr_suboptimal_pair();
    let cost = CostFunctional::power(2.0);
    let kr = knothe_rosenblatt(&mu, &nu).unwrap();
    let alt = antitone_then_monotone(&mu, &nu).unwrap();
    kr.verify_marginals(&mu, &nu).unwrap();
    alt.verify_marginals(&mu, &nu).unwrap();
    assert_eq!(plan_cost(&kr, &cost), int(3));
    assert_eq!(plan_cost(&alt, &cost), int(2));
    let (opt, plan) = exact_bicausal_value(&mu, &nu, &cost).unwrap();
    assert!(opt <= int(2));
    assert!(opt < int(3));
    assert_eq!(plan_cost(&plan, &cost), opt);
    assert_eq!(opt, vertex_enumeration(&mu, &nu, &cost));
}

#[test]
fn fixture_monotonicity_verdicts() {
    let (mu, nu) = kr_suboptimal_pair();
    let first = check_stochastic_monotone(&mu, DominanceOrder::First);
    assert_eq!(first.classification(), Monotonicity::Neither);
    let w = first.increasing_witness.expect("crossing recorded");
    assert!((0.0..2.0).contains(&w.point), "crossing at {}", w.point);
    assert_eq!((w.lower_stat, w.upper_stat), (0.5, 1.0));
    assert_eq!(check_stochastic_monotone(&mu, DominanceOrder::Second).classification(), Monotonicity::Increasing);
    assert_eq!(check_stochastic_monotone(&nu, DominanceOrder::First).classification(), Monotonicity::Increasing);
    assert_eq!(check_stochastic_monotone(&nu, DominanceOrder::Second).classification(), Monotonicity::Increasing);
}

#[test]
fn identical_kernels_are_both() {
    let (mu, _) = martingale_pair(0.0);
    let x = FiniteAdaptedProcess::from_paths(
        2,
        &[
            (vec![0.0, 1.0], mass(1, 4)),
            (vec![0.0, 2.0], mass(1, 4)),
            (vec![1.0, 1.0], mass(1, 4)),
            (vec![1.0, 2.0], mass(1, 4)),
        ],
    )
    .unwrap();
    for order in [DominanceOrder::First, DominanceOrder::Second] {
        assert_eq!(check_stochastic_monotone(&x, order).classification(), Monotonicity::Both);
        // A single first-stage node has nothing to compare.
        assert_eq!(check_stochastic_monotone(&mu, order).classification(), Monotonicity::Both);
    }
}

#[test]
fn martingale_perturbation_exact_values() {
    for eps in [0.1, 0.25, 0.5] {
        let (x, y) = martingale_pair(eps);
        for p in [1u32, 2, 3] {
            let cost = CostFunctional::power(p as f64);
            let (v, plan) = exact_bicausal_value(&x, &y, &cost).unwrap();
            plan.verify_marginals(&x, &y).unwrap();
            let expected = num_traits::pow(rational(eps), p as usize) + num_traits::pow(int(2), p as usize - 1);
            assert_eq!(v, expected, "eps {eps} p {p}");
        }
    }
}

#[test]
fn value_is_symmetric_and_zero_on_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cost = CostFunctional::power(2.0);
    for _ in 0..40 {
        let mu = random_tree(&mut rng, 2, 3, 4);
        let nu = random_tree(&mut rng, 2, 3, 4);
        let (a, _) = exact_bicausal_value(&mu, &nu, &cost).unwrap();
        let (b, _) = exact_bicausal_value(&nu, &mu, &cost).unwrap();
        assert_eq!(a, b);
        assert!(exact_bicausal_value(&mu, &mu, &cost).unwrap().0.is_zero());
    }
}

#[test]
fn backward_induction_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in [1.0, 2.0, 1.5] {
        let cost = CostFunctional::power(p);
        for _ in 0..60 {
            let stages = rng.random_range(1..=2);
            let mu = random_tree(&mut rng, stages, 2, 4);
            let nu = random_tree(&mut rng, stages, 2, 4);
            let (v, plan) = exact_bicausal_value(&mu, &nu, &cost).unwrap();
            plan.verify_marginals(&mu, &nu).unwrap();
            assert_eq!(plan_cost(&plan, &cost), v);
            assert_eq!(v, vertex_enumeration(&mu, &nu, &cost), "p {p}");
        }
    }
}

#[test]
fn stagewise_monotone_plan_is_optimal_for_comonotone_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for p in [1.0, 2.0] {
        let cost = CostFunctional::power(p);
        for i in 0..120 {
            let stages = 1 + i % 3;
            let (mu, nu) = random_comonotone_pair(&mut rng, stages, 3, 4);
            let kr = knothe_rosenblatt(&mu, &nu).unwrap();
            kr.verify_marginals(&mu, &nu).unwrap();
            let (opt, _) = exact_bicausal_value(&mu, &nu, &cost).unwrap();
            assert_eq!(plan_cost(&kr, &cost), opt, "instance {i}, p {p}");
        }
    }
}

#[test]
fn plan_cost_matches_enumerated_path_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cost = CostFunctional::power(2.0);
    for _ in 0..30 {
        let mu = random_tree(&mut rng, 3, 2, 4);
        let nu = random_tree(&mut rng, 3, 2, 4);
        let plan = knothe_rosenblatt(&mu, &nu).unwrap();
        let by_paths: BigRational = plan
            .path_pairs()
            .into_iter()
            .map(|(xs, ys, m)| {
                let c: BigRational =
                    xs.iter().zip(&ys).map(|(&x, &y)| num_traits::pow(rational(x) - rational(y), 2)).sum();
                m * c
            })
            .sum();
        assert_eq!(by_paths, plan_cost(&plan, &cost));
        let total: Mass = plan.path_pairs().into_iter().map(|(_, _, m)| m).sum();
        assert!(total.is_one());
    }
}

#[test]
fn documents_round_trip_through_json() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mu = random_tree(&mut rng, 3, 3, 4);
        let nu = random_tree(&mut rng, 3, 3, 4);
        let doc = mu.to_document().unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        let back: TreeDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(FiniteAdaptedProcess::from_document(&back).unwrap().path_law(), mu.path_law());

        let plan = knothe_rosenblatt(&mu, &nu).unwrap();
        let pdoc = plan.to_document(&mu, &nu).unwrap();
        let text = serde_json::to_string(&pdoc).unwrap();
        assert_eq!(serde_json::from_str::<awsde_core::bicausal::PlanDocument>(&text).unwrap(), pdoc);
    }
}

fn grid() -> Vec<f64> {
    (-8..=8).map(|i| i as f64 * 0.5).collect()
}

proptest! {
    #[test]
    fn power_costs_are_quasi_monotone(p in 1.0f64..4.0) {
        let report = check_quasi_monotone(&CostFunctional::power(p), 1, &grid(), &grid());
        prop_assert!(report.holds);
    }

    #[test]
    fn scaled_products_are_not(scale in 0.1f64..3.0) {
        let cost = CostFunctional::custom(move |_, x, y| scale * x * y, 2.0, scale, false);
        let report = check_quasi_monotone(&cost, 1, &grid(), &grid());
        prop_assert!(!report.holds);
        prop_assert!(report.witness.is_some());
    }

    #[test]
    fn random_plans_have_exact_marginals(seed in any::<u64>(), stages in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_tree(&mut rng, stages, 3, 4);
        let nu = random_tree(&mut rng, stages, 3, 4);
        let kr = knothe_rosenblatt(&mu, &nu).unwrap();
        prop_assert!(kr.verify_marginals(&mu, &nu).is_ok());
        let (opt, plan) = exact_bicausal_value(&mu, &nu, &CostFunctional::power(2.0)).unwrap();
        prop_assert!(plan.verify_marginals(&mu, &nu).is_ok());
        prop_assert!(opt <= plan_cost(&kr, &CostFunctional::power(2.0)));
    }
}
