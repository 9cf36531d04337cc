//! Random small trees for property sweeps.

use rand::seq::index::sample;
use rand::Rng;

use super::tree::{mass, FiniteAdaptedProcess, Mass, ProcessBuilder};

/// Random composition of `den` into `parts` positive integers, as masses.
fn random_masses<R: Rng>(rng: &mut R, parts: usize, den: u32) -> Vec<Mass> {
    let mut cuts: Vec<u32> = sample(rng, den as usize - 1, parts - 1).into_iter().map(|c| c as u32 + 1).collect();
    cuts.sort_unstable();
    cuts.push(den);
    let mut prev = 0;
    cuts.into_iter()
        .map(|c| {
            let m = mass((c - prev) as i64, den as i64);
            prev = c;
            m
        })
        .collect()
}

/// Distinct values on the grid `{-3, -2.75, ..., 3}`, sorted.
fn random_values<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = sample(rng, 25, n).into_iter().map(|i| -3.0 + 0.25 * i as f64).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn children_count<R: Rng>(rng: &mut R, max_children: usize, den: u32) -> usize {
    rng.random_range(1..=max_children.min(den as usize))
}

/// Tree with `stages` stages, at most `max_children` children per node and
/// conditional masses with denominator `den`.
pub fn random_tree<R: Rng>(rng: &mut R, stages: usize, max_children: usize, den: u32) -> FiniteAdaptedProcess {
    let mut b = ProcessBuilder::new(stages);
    let mut frontier = vec![ProcessBuilder::ROOT];
    for _ in 0..stages {
        let mut next = Vec::new();
        for parent in frontier {
            let n = children_count(rng, max_children, den);
            let values = random_values(rng, n);
            for (v, m) in values.into_iter().zip(random_masses(rng, n, den)) {
                next.push(b.child(parent, v, m));
            }
        }
        frontier = next;
    }
    b.build().expect("generated tree is valid")
}

/// Markov tree whose stage-`k` kernel at value `x` is a fixed law shifted by
/// `direction * slope_k * x`; shifts of one law are ordered in first-order
/// dominance, so the tree is stochastically increasing for `direction = 1`
/// and decreasing for `direction = -1`.
pub fn random_monotone_tree<R: Rng>(
    rng: &mut R,
    stages: usize,
    max_children: usize,
    den: u32,
    direction: f64,
) -> FiniteAdaptedProcess {
    let mut b = ProcessBuilder::new(stages);
    let mut frontier = vec![(ProcessBuilder::ROOT, 0.0)];
    for _ in 0..stages {
        let n = children_count(rng, max_children, den);
        let base = random_values(rng, n);
        let masses = random_masses(rng, n, den);
        let slope = 0.25 * rng.random_range(0..=6) as f64;
        let mut next = Vec::new();
        for (parent, x) in frontier {
            for (v, m) in base.iter().zip(&masses) {
                let value = v + direction * slope * x;
                next.push((b.child(parent, value, m.clone()), value));
            }
        }
        frontier = next;
    }
    b.build().expect("generated tree is valid")
}

/// Two trees that are both stochastically increasing or both decreasing.
pub fn random_comonotone_pair<R: Rng>(
    rng: &mut R,
    stages: usize,
    max_children: usize,
    den: u32,
) -> (FiniteAdaptedProcess, FiniteAdaptedProcess) {
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    (
        random_monotone_tree(rng, stages, max_children, den, direction),
        random_monotone_tree(rng, stages, max_children, den, direction),
    )
}
