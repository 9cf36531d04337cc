//! Optimal stopping on finite trees and its Lipschitz stability in the
//! adapted Wasserstein distance.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bicausal::{exact_bicausal_value, rational, CostFunctional, FiniteAdaptedProcess};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Sup,
    Inf,
}

/// Payoff `L(k, x_1..x_k)` of stopping at stage `k`; the evaluator only sees the prefix.
pub type PayoffFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct PathPayoff {
    pub name: String,
    pub evaluator: PayoffFn,
    /// Declared `C_L` with `|L(k, x) - L(k, y)| <= C_L ||x - y||_p`.
    pub lipschitz: f64,
    pub p: f64,
    pub objective: Objective,
}

impl fmt::Debug for PathPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PathPayoff")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("p", &self.p)
            .field("objective", &self.objective)
            .finish_non_exhaustive()
    }
}

impl PathPayoff {
    pub fn new<F>(name: impl Into<String>, f: F, lipschitz: f64, p: f64, objective: Objective) -> Self
    where
        F: Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), evaluator: Arc::new(f), lipschitz, p, objective }
    }

    /// `L(k, x) = x_k`, with `C_L = 1` for every `p`.
    pub fn coordinate(p: f64, objective: Objective) -> Self {
        Self::new("coordinate", |_, x: &[f64]| x[x.len() - 1], 1.0, p, objective)
    }

    /// American-style Asian call `L(k, x) = (h sum_{j<=k} x_j - strike)^+`.
    ///
    /// Hölder's inequality gives `C_L = h n^{(p-1)/p}` for `n` stages.
    pub fn asian(strike: f64, h: f64, stages: usize, p: f64, objective: Objective) -> Self {
        let c = h * (stages as f64).powf((p - 1.0) / p);
        Self::new("asian", move |_, x: &[f64]| (h * x.iter().sum::<f64>() - strike).max(0.0), c, p, objective)
    }

    /// `L(k, x) = a_k x_k + b_k |x_k - c_k|`, Lipschitz with `max_k (|a_k| + |b_k|)`.
    pub fn separable(terms: Vec<(f64, f64, f64)>, p: f64, objective: Objective) -> Self {
        let c = terms.iter().map(|(a, b, _)| a.abs() + b.abs()).fold(0.0, f64::max);
        Self::new(
            "separable",
            move |k, x: &[f64]| {
                let (a, b, c) = terms[k - 1];
                let v = x[k - 1];
                a * v + b * (v - c).abs()
            },
            c,
            p,
            objective,
        )
    }

    /// By name: `coordinate`, or `asian` with parameters `strike` and `h`.
    pub fn builtin(name: &str, strike: f64, h: f64, stages: usize, p: f64, objective: Objective) -> Result<Self> {
        match name {
            "coordinate" => Ok(Self::coordinate(p, objective)),
            "asian" => Ok(Self::asian(strike, h, stages, p, objective)),
            other => Err(Error::Config(format!("unknown payoff `{other}` (coordinate, asian)"))),
        }
    }

    pub fn eval(&self, k: usize, prefix: &[f64]) -> f64 {
        (self.evaluator)(k, &prefix[..k])
    }

    /// The payoff `-L` with the opposite objective.
    pub fn negated(&self) -> Self {
        let f = self.evaluator.clone();
        Self {
            name: format!("-{}", self.name),
            evaluator: Arc::new(move |k, x| -f(k, x)),
            lipschitz: self.lipschitz,
            p: self.p,
            objective: match self.objective {
                Objective::Sup => Objective::Inf,
                Objective::Inf => Objective::Sup,
            },
        }
    }

    /// Samples path pairs in `[-5, 5]^stages` and errors if the declared
    /// constant is exceeded by more than 1%.
    pub fn check_lipschitz(&self, stages: usize, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let x: Vec<f64> = (0..stages).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = if rng.random_bool(0.5) {
                x.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect()
            } else {
                (0..stages).map(|_| rng.random_range(-5.0..5.0)).collect()
            };
            let k = rng.random_range(1..=stages);
            let norm = x.iter().zip(&y).map(|(a, b)| (a - b).abs().powf(self.p)).sum::<f64>().powf(1.0 / self.p);
            let gap = (self.eval(k, &x) - self.eval(k, &y)).abs();
            if gap > 1.01 * self.lipschitz * norm + 1e-12 {
                return Err(Error::Config(format!(
                    "payoff {} violates its Lipschitz constant {}: |L({k}, x) - L({k}, y)| = {gap} > {} at x = {x:?}, y = {y:?}",
                    self.name,
                    self.lipschitz,
                    self.lipschitz * norm
                )));
            }
        }
        Ok(())
    }
}

fn better(objective: Objective, a: BigRational, b: BigRational) -> BigRational {
    match objective {
        Objective::Sup => a.max(b),
        Objective::Inf => a.min(b),
    }
}

/// Snell envelope value of every node, by backward induction.
///
/// There is no decision at the virtual root; at a leaf the process must stop.
pub fn snell_envelope(proc: &FiniteAdaptedProcess, payoff: &PathPayoff) -> Vec<BigRational> {
    let n = proc.stages();
    let mut values = vec![BigRational::zero(); proc.nodes().len()];
    for depth in (0..=n).rev() {
        for i in proc.level(depth) {
            let stop = || rational(payoff.eval(depth, &proc.prefix(i)));
            values[i] = if depth == n {
                stop()
            } else {
                let cont: BigRational = proc.children(i).iter().map(|&c| proc.node(c).mass.clone() * &values[c]).sum();
                if depth == 0 {
                    cont
                } else {
                    better(payoff.objective, stop(), cont)
                }
            };
        }
    }
    values
}

/// Optimal stopping value `sup_tau E[L(tau, X)]` (or `inf`), exact in the payoff values.
pub fn snell_value(proc: &FiniteAdaptedProcess, payoff: &PathPayoff) -> BigRational {
    snell_envelope(proc, payoff).swap_remove(0)
}

/// Largest tree, in nodes, accepted by [`snell_value_by_enumeration`].
pub const ENUMERATION_NODE_CAP: usize = 8;

/// Optimal stopping value by trying every stopping rule, i.e. every set of
/// non-leaf nodes at which to stop.
pub fn snell_value_by_enumeration(proc: &FiniteAdaptedProcess, payoff: &PathPayoff) -> Result<BigRational> {
    if proc.len() > ENUMERATION_NODE_CAP {
        return Err(Error::InstanceTooLarge { atoms: proc.len() as u64, cap: ENUMERATION_NODE_CAP as u64 });
    }
    let n = proc.stages();
    let inner: Vec<usize> = (1..proc.nodes().len()).filter(|&i| proc.node(i).depth < n).collect();
    let paths: Vec<(Vec<usize>, BigRational)> = proc
        .leaves()
        .map(|leaf| {
            let mut chain = Vec::new();
            let mut cur = leaf;
            while cur != 0 {
                chain.push(cur);
                cur = proc.node(cur).parent.unwrap_or(0);
            }
            chain.reverse();
            (chain, proc.joint_mass(leaf))
        })
        .collect();
    let mut best: Option<BigRational> = None;
    for rule in 0u32..(1 << inner.len()) {
        let stops = |i: usize| inner.iter().position(|&j| j == i).is_some_and(|pos| rule & (1 << pos) != 0);
        let value: BigRational = paths
            .iter()
            .map(|(chain, m)| {
                let at = chain.iter().copied().find(|&i| stops(i)).unwrap_or(chain[chain.len() - 1]);
                m * rational(payoff.eval(proc.node(at).depth, &proc.prefix(at)))
            })
            .sum();
        best = Some(match best {
            None => value,
            Some(b) => better(payoff.objective, b, value),
        });
    }
    Ok(best.expect("at least one rule"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityGap {
    /// `|v(mu) - v(nu)|`.
    pub lhs: f64,
    /// `C_L AW_p(mu, nu)`.
    pub rhs: f64,
    /// `AW_p^p(mu, nu)`.
    pub aw_pp: f64,
}

impl StabilityGap {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9
    }
}

/// Both sides of `|v(mu) - v(nu)| <= C_L AW_p(mu, nu)`.
pub fn stopping_stability_gap(
    mu: &FiniteAdaptedProcess,
    nu: &FiniteAdaptedProcess,
    payoff: &PathPayoff,
    p: f64,
) -> Result<StabilityGap> {
    if payoff.p != p {
        return Err(Error::Config(format!(
            "payoff constant is declared for p = {}, bound requested for p = {p}",
            payoff.p
        )));
    }
    let lhs = (snell_value(mu, payoff) - snell_value(nu, payoff)).abs();
    let (aw_pp, _) = exact_bicausal_value(mu, nu, &CostFunctional::power(p))?;
    let aw_pp = aw_pp.to_f64().unwrap_or(f64::NAN);
    Ok(StabilityGap { lhs: lhs.to_f64().unwrap_or(f64::NAN), rhs: payoff.lipschitz * aw_pp.powf(1.0 / p), aw_pp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bicausal::{mass, random::random_tree};

    fn martingale() -> FiniteAdaptedProcess {
        FiniteAdaptedProcess::from_paths(2, &[(vec![0.0, 1.0], mass(1, 2)), (vec![0.0, -1.0], mass(1, 2))]).unwrap()
    }

    fn perturbed(eps: f64) -> FiniteAdaptedProcess {
        FiniteAdaptedProcess::from_paths(2, &[(vec![eps, 1.0], mass(1, 2)), (vec![-eps, -1.0], mass(1, 2))]).unwrap()
    }

    #[test]
    fn constant_process() {
        let p = FiniteAdaptedProcess::from_paths(3, &[(vec![2.0, 2.0, 2.0], mass(1, 1))]).unwrap();
        let v = snell_value(&p, &PathPayoff::coordinate(2.0, Objective::Sup));
        assert_eq!(v, rational(2.0));
    }

    #[test]
    fn martingale_and_perturbation() {
        let payoff = PathPayoff::coordinate(2.0, Objective::Sup);
        assert_eq!(snell_value(&martingale(), &payoff), BigRational::zero());
        let eps = 0.1;
        let expected = (BigRational::from_integer(1.into()) - rational(eps)) / BigRational::from_integer(2.into());
        assert_eq!(snell_value(&perturbed(eps), &payoff), expected);
    }

    #[test]
    fn sign_flip_identity() {
        let payoff = PathPayoff::coordinate(2.0, Objective::Sup);
        let p = perturbed(0.3);
        assert_eq!(snell_value(&p, &payoff), -snell_value(&p, &payoff.negated()));
    }

    #[test]
    fn envelope_dominates_payoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let payoff = PathPayoff::coordinate(1.0, Objective::Sup);
        for _ in 0..20 {
            let p = random_tree(&mut rng, 3, 3, 6);
            let env = snell_envelope(&p, &payoff);
            for (i, v) in env.iter().enumerate().skip(1) {
                let d = p.node(i).depth;
                assert!(*v >= rational(payoff.eval(d, &p.prefix(i))));
            }
        }
    }

    #[test]
    fn enumeration_agrees_with_induction() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut compared = 0;
        for _ in 0..200 {
            let p = random_tree(&mut rng, 3, 2, 4);
            if p.len() > ENUMERATION_NODE_CAP {
                continue;
            }
            for objective in [Objective::Sup, Objective::Inf] {
                let payoff = PathPayoff::asian(0.1, 0.5, 3, 2.0, objective);
                assert_eq!(snell_value_by_enumeration(&p, &payoff).unwrap(), snell_value(&p, &payoff));
            }
            compared += 1;
        }
        assert!(compared > 20);
    }

    #[test]
    fn stability_on_the_martingale_pair() {
        let payoff = PathPayoff::coordinate(2.0, Objective::Sup);
        let g = stopping_stability_gap(&martingale(), &perturbed(0.1), &payoff, 2.0).unwrap();
        assert!((g.lhs - 0.45).abs() < 1e-15);
        assert!((g.rhs - 2.01f64.sqrt()).abs() < 1e-12);
        assert!((g.rhs - 1.4177).abs() < 1e-4);
        assert!(g.holds());
        let same = stopping_stability_gap(&martingale(), &martingale(), &payoff, 2.0).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
    }

    #[test]
    fn declared_constants_checked() {
        assert!(PathPayoff::asian(0.5, 0.25, 4, 2.0, Objective::Inf).check_lipschitz(4, 5000, 1).is_ok());
        assert!(PathPayoff::coordinate(1.5, Objective::Sup).check_lipschitz(3, 5000, 1).is_ok());
        let wrong = PathPayoff::new("double", |_, x: &[f64]| 2.0 * x[x.len() - 1], 1.0, 2.0, Objective::Sup);
        assert!(wrong.check_lipschitz(3, 5000, 1).is_err());
    }
}
