use std::collections::{HashMap, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exact probability mass.
pub type Mass = BigRational;

/// Exact rational value of a finite float.
pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(|| panic!("{x} has no rational value"))
}

pub fn mass(num: i64, den: i64) -> Mass {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub(crate) fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn to_i64_pair(m: &Mass) -> Result<(i64, i64)> {
    match (m.numer().to_i64(), m.denom().to_i64()) {
        (Some(n), Some(d)) => Ok((n, d)),
        _ => Err(Error::InvalidTree(format!("mass {m} does not fit in 64-bit integers"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: u64,
    pub value: f64,
    pub parent: Option<usize>,
    /// Conditional probability given the parent.
    pub mass: Mass,
    pub depth: usize,
    /// Children sorted by increasing value.
    pub children: Vec<usize>,
}

/// Law of a discrete-time process as a rooted probability tree.
///
/// Node 0 is a virtual root at depth 0; the node at depth `k` carries the
/// value of the `k`-th coordinate, and its children the conditional law of
/// the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteAdaptedProcess {
    stages: usize,
    nodes: Vec<TreeNode>,
}

pub struct ProcessBuilder {
    stages: usize,
    nodes: Vec<TreeNode>,
}

impl ProcessBuilder {
    pub fn new(stages: usize) -> Self {
        let root = TreeNode { id: 0, value: 0.0, parent: None, mass: Mass::one(), depth: 0, children: Vec::new() };
        Self { stages, nodes: vec![root] }
    }

    pub const ROOT: usize = 0;

    /// Adds a child of `parent` and returns its index; its id is the index.
    pub fn child(&mut self, parent: usize, value: f64, mass: Mass) -> usize {
        self.child_with_id(parent, value, mass, self.nodes.len() as u64)
    }

    pub fn child_with_id(&mut self, parent: usize, value: f64, mass: Mass, id: u64) -> usize {
        let idx = self.nodes.len();
        let depth = self.nodes.get(parent).map_or(usize::MAX, |p| p.depth + 1);
        self.nodes.push(TreeNode { id, value, parent: Some(parent), mass, depth, children: Vec::new() });
        if let Some(p) = self.nodes.get_mut(parent) {
            p.children.push(idx);
        }
        idx
    }

    pub fn build(mut self) -> Result<FiniteAdaptedProcess> {
        if self.stages == 0 {
            return Err(Error::InvalidTree("a process needs at least one stage".into()));
        }
        let mut ids = HashSet::new();
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            if node.parent.is_none_or(|p| p >= i) || node.depth == usize::MAX {
                return Err(Error::InvalidTree(format!("node {} has an invalid parent", node.id)));
            }
            if node.depth > self.stages {
                return Err(Error::InvalidTree(format!("node {} lies below stage {}", node.id, self.stages)));
            }
            if !node.value.is_finite() {
                return Err(Error::InvalidTree(format!("node {} has non-finite value", node.id)));
            }
            if !node.mass.is_positive() {
                return Err(Error::InvalidTree(format!("node {} has nonpositive mass {}", node.id, node.mass)));
            }
            if !ids.insert(node.id) {
                return Err(Error::InvalidTree(format!("duplicate node id {}", node.id)));
            }
        }
        for node in &self.nodes {
            if node.depth < self.stages {
                if node.children.is_empty() {
                    return Err(Error::InvalidTree(format!(
                        "node {} at stage {} has no children (tree depth must be {})",
                        node.id, node.depth, self.stages
                    )));
                }
                let total: Mass = node.children.iter().map(|&c| self.nodes[c].mass.clone()).sum();
                if total != Mass::one() {
                    return Err(Error::InvalidTree(format!("children of node {} have total mass {total}", node.id)));
                }
                let mut seen = HashSet::new();
                for &c in &node.children {
                    if !seen.insert(self.nodes[c].value.to_bits()) {
                        return Err(Error::InvalidTree(format!(
                            "node {} has two children with value {}",
                            node.id, self.nodes[c].value
                        )));
                    }
                }
            }
        }
        let values: Vec<f64> = self.nodes.iter().map(|n| n.value).collect();
        for node in &mut self.nodes {
            node.children.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        }
        Ok(FiniteAdaptedProcess { stages: self.stages, nodes: self.nodes })
    }
}

/// Serialised tree: `parent` is `null` for first-stage nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub stages: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub value: f64,
    pub parent: Option<u64>,
    pub mass_num: i64,
    pub mass_den: i64,
}

impl FiniteAdaptedProcess {
    pub fn builder(stages: usize) -> ProcessBuilder {
        ProcessBuilder::new(stages)
    }

    /// Tree of a finitely supported law given by its paths and joint masses.
    pub fn from_paths(stages: usize, paths: &[(Vec<f64>, Mass)]) -> Result<Self> {
        let total: Mass = paths.iter().map(|(_, m)| m.clone()).sum();
        if total != Mass::one() {
            return Err(Error::InvalidTree(format!("path masses sum to {total}")));
        }
        // Joint mass of each prefix, in order of first appearance.
        let mut order: Vec<Vec<u64>> = Vec::new();
        let mut joint: HashMap<Vec<u64>, (f64, Mass)> = HashMap::new();
        for (path, m) in paths {
            if path.len() != stages {
                return Err(Error::StageMismatch { left: path.len(), right: stages });
            }
            for k in 1..=stages {
                let key: Vec<u64> = path[..k].iter().map(|v| v.to_bits()).collect();
                let entry = joint.entry(key.clone()).or_insert_with(|| {
                    order.push(key);
                    (path[k - 1], Mass::zero())
                });
                entry.1 += m.clone();
            }
        }
        let mut b = ProcessBuilder::new(stages);
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for key in order {
            let (value, m) = joint[&key].clone();
            let (parent, parent_mass) = if key.len() == 1 {
                (ProcessBuilder::ROOT, Mass::one())
            } else {
                let pk = key[..key.len() - 1].to_vec();
                (index[&pk], joint[&pk].1.clone())
            };
            let idx = b.child(parent, value, m / parent_mass);
            index.insert(key, idx);
        }
        b.build()
    }

    pub fn from_document(doc: &TreeDocument) -> Result<Self> {
        let by_id: HashMap<u64, &NodeRecord> = doc.nodes.iter().map(|r| (r.id, r)).collect();
        if by_id.len() != doc.nodes.len() {
            return Err(Error::InvalidTree("duplicate node ids".into()));
        }
        let mut b = ProcessBuilder::new(doc.stages);
        let mut index: HashMap<u64, usize> = HashMap::new();
        // Insert parents before children regardless of record order.
        fn insert(
            id: u64,
            by_id: &HashMap<u64, &NodeRecord>,
            index: &mut HashMap<u64, usize>,
            b: &mut ProcessBuilder,
            depth: usize,
        ) -> Result<usize> {
            if let Some(&i) = index.get(&id) {
                return Ok(i);
            }
            if depth > by_id.len() {
                return Err(Error::InvalidTree(format!("cycle through node {id}")));
            }
            let r = by_id.get(&id).ok_or_else(|| Error::InvalidTree(format!("unknown parent id {id}")))?;
            let parent = match r.parent {
                None => ProcessBuilder::ROOT,
                Some(p) => insert(p, by_id, index, b, depth + 1)?,
            };
            if r.mass_den <= 0 {
                return Err(Error::InvalidTree(format!("node {id} has denominator {}", r.mass_den)));
            }
            let i = b.child_with_id(parent, r.value, mass(r.mass_num, r.mass_den), r.id);
            index.insert(id, i);
            Ok(i)
        }
        for r in &doc.nodes {
            insert(r.id, &by_id, &mut index, &mut b, 0)?;
        }
        b.build()
    }

    pub fn to_document(&self) -> Result<TreeDocument> {
        let mut nodes = Vec::with_capacity(self.nodes.len() - 1);
        for node in &self.nodes[1..] {
            let (mass_num, mass_den) = to_i64_pair(&node.mass)?;
            nodes.push(NodeRecord {
                id: node.id,
                value: node.value,
                parent: node.parent.filter(|&p| p != 0).map(|p| self.nodes[p].id),
                mass_num,
                mass_den,
            });
        }
        Ok(TreeDocument { stages: self.stages, nodes })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.nodes[i].children
    }

    /// Number of nodes excluding the virtual root.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn child_with_value(&self, parent: usize, value: f64) -> Option<usize> {
        self.children(parent).iter().copied().find(|&c| self.nodes[c].value == value)
    }

    /// Values `x_1, ..., x_k` along the path to node `i` at depth `k`.
    pub fn prefix(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nodes[i].depth);
        let mut cur = i;
        while cur != 0 {
            out.push(self.nodes[cur].value);
            cur = self.nodes[cur].parent.unwrap_or(0);
        }
        out.reverse();
        out
    }

    /// Unconditional probability of reaching node `i`.
    pub fn joint_mass(&self, i: usize) -> Mass {
        let mut m = Mass::one();
        let mut cur = i;
        while cur != 0 {
            m *= self.nodes[cur].mass.clone();
            cur = self.nodes[cur].parent.unwrap_or(0);
        }
        m
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.nodes.len()).filter(|&i| self.nodes[i].depth == self.stages)
    }

    /// Full paths with their joint masses.
    pub fn path_law(&self) -> Vec<(Vec<f64>, Mass)> {
        self.leaves().map(|l| (self.prefix(l), self.joint_mass(l))).collect()
    }

    /// Nodes at depth `k`.
    pub fn level(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].depth == k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Mass {
        mass(1, 2)
    }

    #[test]
    fn from_paths_merges_prefixes() {
        let p = FiniteAdaptedProcess::from_paths(2, &[(vec![0.0, 1.0], half()), (vec![0.0, -1.0], half())]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.children(0).len(), 1);
        let first = p.children(0)[0];
        assert_eq!(p.node(first).mass, Mass::one());
        let values: Vec<f64> = p.children(first).iter().map(|&c| p.node(c).value).collect();
        assert_eq!(values, vec![-1.0, 1.0]);
        assert_eq!(p.joint_mass(p.children(first)[0]), half());
    }

    #[test]
    fn rejects_bad_masses_and_ties() {
        let mut b = ProcessBuilder::new(1);
        b.child(0, 0.0, half());
        assert!(b.build().is_err());
        let mut b = ProcessBuilder::new(1);
        b.child(0, 0.0, half());
        b.child(0, 0.0, half());
        assert!(b.build().is_err());
        let mut b = ProcessBuilder::new(2);
        b.child(0, 0.0, Mass::one());
        assert!(b.build().is_err(), "short branch");
    }

    #[test]
    fn document_round_trip() {
        let p = FiniteAdaptedProcess::from_paths(
            2,
            &[(vec![0.5, 2.0], mass(1, 4)), (vec![0.5, -2.0], mass(1, 4)), (vec![-0.5, 0.0], half())],
        )
        .unwrap();
        let doc = p.to_document().unwrap();
        let json = serde_json::to_string(&doc).unwrap();
        let back: TreeDocument = serde_json::from_str(&json).unwrap();
        let mut reversed = back.clone();
        reversed.nodes.reverse();
        let q = FiniteAdaptedProcess::from_document(&reversed).unwrap();
        let mut a = p.path_law();
        let mut b = q.path_law();
        a.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        b.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        assert_eq!(a, b);
    }
}
