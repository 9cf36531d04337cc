use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::tree::{rational, to_f64, FiniteAdaptedProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceOrder {
    /// Conditional distribution functions.
    First,
    /// Integrated conditional distribution functions.
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    /// All compared kernels coincide.
    Both,
    Neither,
}

/// Point where the kernels of two nodes are ordered the wrong way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingWitness {
    /// Stage of the compared conditional laws.
    pub stage: usize,
    pub lower_node: u64,
    pub upper_node: u64,
    pub lower_value: f64,
    pub upper_value: f64,
    pub point: f64,
    /// CDF (or integrated CDF) of the kernel below the smaller value.
    pub lower_stat: f64,
    pub upper_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneVerdict {
    pub order: DominanceOrder,
    pub increasing: bool,
    pub decreasing: bool,
    pub increasing_witness: Option<CrossingWitness>,
    pub decreasing_witness: Option<CrossingWitness>,
}

impl MonotoneVerdict {
    pub fn classification(&self) -> Monotonicity {
        match (self.increasing, self.decreasing) {
            (true, true) => Monotonicity::Both,
            (true, false) => Monotonicity::Increasing,
            (false, true) => Monotonicity::Decreasing,
            (false, false) => Monotonicity::Neither,
        }
    }
}

/// Kernel statistic at `t`: the CDF or its integral, exactly.
fn stat(proc: &FiniteAdaptedProcess, node: usize, t: &BigRational, order: DominanceOrder) -> BigRational {
    let mut out = BigRational::zero();
    for &c in proc.children(node) {
        let x = rational(proc.node(c).value);
        if x <= *t {
            let m = proc.node(c).mass.clone();
            out += match order {
                DominanceOrder::First => m,
                DominanceOrder::Second => m * (t - x),
            };
        }
    }
    out
}

/// Compares the conditional laws of every pair of nodes at the same stage,
/// ordered by their last value.
///
/// Increasing means that the kernel of the larger value dominates: its CDF
/// (first order) or integrated CDF (second order) lies below the other one
/// at every support point. Both statistics are step or piecewise linear
/// functions with kinks at support points, so checking those is exact.
pub fn check_stochastic_monotone(proc: &FiniteAdaptedProcess, order: DominanceOrder) -> MonotoneVerdict {
    let mut v = MonotoneVerdict {
        order,
        increasing: true,
        decreasing: true,
        increasing_witness: None,
        decreasing_witness: None,
    };
    for depth in 1..proc.stages() {
        let level: Vec<usize> = proc.level(depth).collect();
        for (i, &a) in level.iter().enumerate() {
            for &b in &level[i + 1..] {
                let (lo, hi) = if proc.node(a).value <= proc.node(b).value { (a, b) } else { (b, a) };
                let tie = proc.node(lo).value == proc.node(hi).value;
                let mut points: Vec<f64> =
                    proc.children(lo).iter().chain(proc.children(hi)).map(|&c| proc.node(c).value).collect();
                points.sort_by(f64::total_cmp);
                points.dedup();
                for &p in &points {
                    let t = rational(p);
                    let (fl, fh) = (stat(proc, lo, &t, order), stat(proc, hi, &t, order));
                    let witness = || CrossingWitness {
                        stage: depth + 1,
                        lower_node: proc.node(lo).id,
                        upper_node: proc.node(hi).id,
                        lower_value: proc.node(lo).value,
                        upper_value: proc.node(hi).value,
                        point: p,
                        lower_stat: to_f64(&fl),
                        upper_stat: to_f64(&fh),
                    };
                    // Equal values make the pair ordered both ways.
                    if fl < fh || (tie && fl > fh) {
                        v.increasing = false;
                        v.increasing_witness.get_or_insert_with(witness);
                    }
                    if fl > fh || (tie && fl < fh) {
                        v.decreasing = false;
                        v.decreasing_witness.get_or_insert_with(witness);
                    }
                }
            }
        }
    }
    v
}
