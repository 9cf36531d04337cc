use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::cost::CostFunctional;
use super::tree::{to_i64_pair, FiniteAdaptedProcess, Mass};
use crate::{Error, Result};

/// Largest number of equal-mass atoms per marginal in the inner transport problem.
pub const ATOM_CAP: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    /// Node of the first process.
    pub mu: usize,
    /// Node of the second process.
    pub nu: usize,
    pub x: f64,
    pub y: f64,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Conditional mass given the parent pair.
    pub mass: Mass,
    /// Unconditional mass of the pair of histories.
    pub joint: Mass,
    pub children: Vec<usize>,
}

/// Coupling of two trees built stage by stage from couplings of conditional
/// marginals, hence bicausal.
#[derive(Debug, Clone, PartialEq)]
pub struct BicausalPlan {
    stages: usize,
    nodes: Vec<PlanNode>,
}

/// Incremental construction of a [`BicausalPlan`] over two fixed trees.
pub struct PlanBuilder<'a> {
    mu: &'a FiniteAdaptedProcess,
    nu: &'a FiniteAdaptedProcess,
    nodes: Vec<PlanNode>,
}

impl<'a> PlanBuilder<'a> {
    pub fn new(mu: &'a FiniteAdaptedProcess, nu: &'a FiniteAdaptedProcess) -> Result<Self> {
        if mu.stages() != nu.stages() {
            return Err(Error::StageMismatch { left: mu.stages(), right: nu.stages() });
        }
        let root = PlanNode {
            mu: 0,
            nu: 0,
            x: 0.0,
            y: 0.0,
            parent: None,
            depth: 0,
            mass: Mass::one(),
            joint: Mass::one(),
            children: Vec::new(),
        };
        Ok(Self { mu, nu, nodes: vec![root] })
    }

    pub const ROOT: usize = 0;

    /// Couples child `mu_child` of the first tree with child `nu_child` of the
    /// second under pair `parent`, with conditional mass `mass`.
    pub fn couple(&mut self, parent: usize, mu_child: usize, nu_child: usize, mass: Mass) -> Result<usize> {
        let p = self.nodes.get(parent).ok_or_else(|| Error::InvalidTree(format!("no plan node {parent}")))?;
        if self.mu.node(mu_child).parent != Some(p.mu) || self.nu.node(nu_child).parent != Some(p.nu) {
            return Err(Error::InvalidTree("coupled nodes are not children of the parent pair".into()));
        }
        let idx = self.nodes.len();
        let joint = p.joint.clone() * mass.clone();
        let depth = p.depth + 1;
        self.nodes.push(PlanNode {
            mu: mu_child,
            nu: nu_child,
            x: self.mu.node(mu_child).value,
            y: self.nu.node(nu_child).value,
            parent: Some(parent),
            depth,
            mass,
            joint,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(idx);
        Ok(idx)
    }

    /// Finishes the plan after certifying both marginals exactly.
    pub fn build(self) -> Result<BicausalPlan> {
        let plan = BicausalPlan { stages: self.mu.stages(), nodes: self.nodes };
        plan.verify_marginals(self.mu, self.nu)?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub stages: usize,
    pub nodes: Vec<PlanRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub id: u64,
    pub mu_id: u64,
    pub nu_id: u64,
    pub parent: Option<u64>,
    pub mass_num: i64,
    pub mass_den: i64,
}

impl BicausalPlan {
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    /// Checks that at every pair of nodes the children couple the two
    /// conditional marginals, which makes both projections exact.
    pub fn verify_marginals(&self, mu: &FiniteAdaptedProcess, nu: &FiniteAdaptedProcess) -> Result<()> {
        for node in &self.nodes {
            if node.depth == self.stages {
                if !node.children.is_empty() {
                    return Err(Error::InvalidTree("plan extends beyond the last stage".into()));
                }
                continue;
            }
            let mut row: HashMap<usize, Mass> = HashMap::new();
            let mut col: HashMap<usize, Mass> = HashMap::new();
            for &c in &node.children {
                let pc = &self.nodes[c];
                *row.entry(pc.mu).or_insert_with(Mass::zero) += pc.mass.clone();
                *col.entry(pc.nu).or_insert_with(Mass::zero) += pc.mass.clone();
            }
            for (tree, margin, side) in [(mu, &row, "first"), (nu, &col, "second")] {
                let idx = if side == "first" { node.mu } else { node.nu };
                let kids = tree.children(idx);
                if margin.len() != kids.len() || kids.iter().any(|k| margin.get(k) != Some(&tree.node(*k).mass)) {
                    return Err(Error::InvalidTree(format!(
                        "plan does not reproduce the {side} marginal below stage {}",
                        node.depth
                    )));
                }
            }
        }
        Ok(())
    }

    /// Pairs of full paths with their joint masses.
    pub fn path_pairs(&self) -> Vec<(Vec<f64>, Vec<f64>, Mass)> {
        let mut out = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.depth != self.stages || i == 0 {
                continue;
            }
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            let mut cur = i;
            while cur != 0 {
                xs.push(self.nodes[cur].x);
                ys.push(self.nodes[cur].y);
                cur = self.nodes[cur].parent.unwrap_or(0);
            }
            xs.reverse();
            ys.reverse();
            out.push((xs, ys, node.joint.clone()));
        }
        out
    }

    pub fn to_document(&self, mu: &FiniteAdaptedProcess, nu: &FiniteAdaptedProcess) -> Result<PlanDocument> {
        let mut nodes = Vec::with_capacity(self.nodes.len() - 1);
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            let (mass_num, mass_den) = to_i64_pair(&node.mass)?;
            nodes.push(PlanRecord {
                id: i as u64,
                mu_id: mu.node(node.mu).id,
                nu_id: nu.node(node.nu).id,
                parent: node.parent.filter(|&p| p != 0).map(|p| p as u64),
                mass_num,
                mass_den,
            });
        }
        Ok(PlanDocument { stages: self.stages, nodes })
    }
}

/// Expected total cost `E[sum_k c_k(x_k, y_k)]` under the plan.
pub fn plan_cost(plan: &BicausalPlan, cost: &CostFunctional) -> BigRational {
    plan.nodes.iter().skip(1).map(|n| n.joint.clone() * cost.exact(n.depth, n.x, n.y)).sum()
}

/// Stagewise monotone coupling: at each pair of nodes the children are
/// coupled by the quantile (north-west corner) rule.
pub fn knothe_rosenblatt(mu: &FiniteAdaptedProcess, nu: &FiniteAdaptedProcess) -> Result<BicausalPlan> {
    quantile_plan(mu, nu, |_| false)
}

/// Antitone coupling of the first marginals followed by the quantile rule at
/// every later stage.
pub fn antitone_then_monotone(mu: &FiniteAdaptedProcess, nu: &FiniteAdaptedProcess) -> Result<BicausalPlan> {
    quantile_plan(mu, nu, |depth| depth == 0)
}

/// Couples children of each node pair at `depth` monotonically, or
/// antitonically when `antitone(depth)` holds.
fn quantile_plan<F: Fn(usize) -> bool>(
    mu: &FiniteAdaptedProcess,
    nu: &FiniteAdaptedProcess,
    antitone: F,
) -> Result<BicausalPlan> {
    let mut b = PlanBuilder::new(mu, nu)?;
    let mut stack = vec![PlanBuilder::ROOT];
    while let Some(pair) = stack.pop() {
        let (a, c) = (b.nodes[pair].mu, b.nodes[pair].nu);
        let depth = mu.node(a).depth;
        if depth == mu.stages() {
            continue;
        }
        let rows = mu.children(a);
        let mut cols = nu.children(c).to_vec();
        if antitone(depth) {
            cols.reverse();
        }
        let (mut i, mut j) = (0, 0);
        let mut ri = mu.node(rows[0]).mass.clone();
        let mut cj = nu.node(cols[0]).mass.clone();
        while i < rows.len() && j < cols.len() {
            let m = if ri < cj { ri.clone() } else { cj.clone() };
            let child = b.couple(pair, rows[i], cols[j], m.clone())?;
            stack.push(child);
            ri -= m.clone();
            cj -= m;
            if ri.is_zero() {
                i += 1;
                if i < rows.len() {
                    ri = mu.node(rows[i]).mass.clone();
                }
            }
            if cj.is_zero() {
                j += 1;
                if j < cols.len() {
                    cj = nu.node(cols[j]).mass.clone();
                }
            }
        }
    }
    b.build()
}

/// Coupling of two conditional marginals: `(row, column, mass)` triples.
type Coupling = Vec<(usize, usize, Mass)>;

/// Exact optimal transport between two small discrete marginals.
///
/// Both marginals are split into `L` atoms of mass `1/L`, `L` the common
/// denominator. An optimal coupling of the split problem is an assignment
/// (the transport polytope has integral vertices), found exhaustively by
/// dynamic programming over the multiset of column atoms still free.
pub fn solve_small_transport(
    rows: &[Mass],
    cols: &[Mass],
    cost: &[Vec<BigRational>],
) -> Result<(BigRational, Coupling)> {
    let lcm = rows.iter().chain(cols).fold(BigInt::one(), |l, m| l.lcm(m.denom()));
    let atoms = lcm
        .to_u64()
        .filter(|&l| l <= ATOM_CAP)
        .ok_or(Error::InstanceTooLarge { atoms: lcm.to_u64().unwrap_or(u64::MAX), cap: ATOM_CAP })?;
    let scale = BigRational::from_integer(lcm.clone());
    let count = |m: &Mass| (m * &scale).to_integer().to_usize().expect("atom count fits");
    let row_counts: Vec<usize> = rows.iter().map(count).collect();
    let col_counts: Vec<usize> = cols.iter().map(count).collect();
    let row_of_atom: Vec<usize> = row_counts.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n)).collect();
    debug_assert_eq!(row_of_atom.len() as u64, atoms);

    // Mixed-radix encoding of the remaining column counts.
    let mut stride = vec![1usize; cols.len()];
    for j in 1..cols.len() {
        stride[j] = stride[j - 1] * (col_counts[j - 1] + 1);
    }
    let states = stride[cols.len() - 1] * (col_counts[cols.len() - 1] + 1);
    let full: usize = col_counts.iter().zip(&stride).map(|(c, s)| c * s).sum();
    let mut memo: Vec<Option<(BigRational, usize)>> = vec![None; states];

    fn best(
        state: usize,
        used: usize,
        row_of_atom: &[usize],
        stride: &[usize],
        col_counts: &[usize],
        cost: &[Vec<BigRational>],
        memo: &mut Vec<Option<(BigRational, usize)>>,
    ) -> BigRational {
        if used == row_of_atom.len() {
            return BigRational::zero();
        }
        if let Some((v, _)) = &memo[state] {
            return v.clone();
        }
        let row = row_of_atom[used];
        let mut out: Option<(BigRational, usize)> = None;
        for j in 0..stride.len() {
            let remaining = (state / stride[j]) % (col_counts[j] + 1);
            if remaining == 0 {
                continue;
            }
            let v = &cost[row][j] + best(state - stride[j], used + 1, row_of_atom, stride, col_counts, cost, memo);
            if out.as_ref().is_none_or(|(b, _)| v < *b) {
                out = Some((v, j));
            }
        }
        let out = out.expect("a free column atom exists");
        memo[state] = Some(out.clone());
        out.0
    }

    let total = best(full, 0, &row_of_atom, &stride, &col_counts, cost, &mut memo);
    let mut plan: HashMap<(usize, usize), usize> = HashMap::new();
    let mut state = full;
    for &row in &row_of_atom {
        let j = memo[state].as_ref().expect("solved").1;
        *plan.entry((row, j)).or_insert(0) += 1;
        state -= stride[j];
    }
    let mut coupling: Coupling =
        plan.into_iter().map(|((i, j), n)| (i, j, BigRational::new(BigInt::from(n), lcm.clone()))).collect();
    coupling.sort_by_key(|&(i, j, _)| (i, j));
    Ok((total / scale, coupling))
}

struct Solver<'a> {
    mu: &'a FiniteAdaptedProcess,
    nu: &'a FiniteAdaptedProcess,
    cost: &'a CostFunctional,
    memo: HashMap<(usize, usize), (BigRational, Coupling)>,
}

impl Solver<'_> {
    fn value(&mut self, a: usize, b: usize) -> Result<BigRational> {
        if let Some((v, _)) = self.memo.get(&(a, b)) {
            return Ok(v.clone());
        }
        let depth = self.mu.node(a).depth;
        let entry = if depth == self.mu.stages() {
            (BigRational::zero(), Vec::new())
        } else {
            let rows = self.mu.children(a).to_vec();
            let cols = self.nu.children(b).to_vec();
            let mut matrix = Vec::with_capacity(rows.len());
            for &r in &rows {
                let mut line = Vec::with_capacity(cols.len());
                for &c in &cols {
                    let stage_cost = self.cost.exact(depth + 1, self.mu.node(r).value, self.nu.node(c).value);
                    line.push(stage_cost + self.value(r, c)?);
                }
                matrix.push(line);
            }
            let row_mass: Vec<Mass> = rows.iter().map(|&r| self.mu.node(r).mass.clone()).collect();
            let col_mass: Vec<Mass> = cols.iter().map(|&c| self.nu.node(c).mass.clone()).collect();
            let (v, coupling) = solve_small_transport(&row_mass, &col_mass, &matrix)?;
            let coupling = coupling.into_iter().map(|(i, j, m)| (rows[i], cols[j], m)).collect();
            (v, coupling)
        };
        let v = entry.0.clone();
        self.memo.insert((a, b), entry);
        Ok(v)
    }
}

/// Optimal value of `E[sum_k c_k(x_k, y_k)]` over bicausal couplings, by
/// backward induction over pairs of nodes with an exact inner transport step,
/// together with an optimal plan.
pub fn exact_bicausal_value(
    mu: &FiniteAdaptedProcess,
    nu: &FiniteAdaptedProcess,
    cost: &CostFunctional,
) -> Result<(BigRational, BicausalPlan)> {
    if mu.stages() != nu.stages() {
        return Err(Error::StageMismatch { left: mu.stages(), right: nu.stages() });
    }
    let mut solver = Solver { mu, nu, cost, memo: HashMap::new() };
    let value = solver.value(mu.root(), nu.root())?;
    let mut b = PlanBuilder::new(mu, nu)?;
    let mut stack = vec![PlanBuilder::ROOT];
    while let Some(pair) = stack.pop() {
        let key = (b.nodes[pair].mu, b.nodes[pair].nu);
        let coupling = solver.memo[&key].1.clone();
        for (r, c, m) in coupling {
            stack.push(b.couple(pair, r, c, m)?);
        }
    }
    Ok((value, b.build()?))
}
