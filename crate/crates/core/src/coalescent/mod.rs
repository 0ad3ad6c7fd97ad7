//! Genealogies under Kingman's coalescent with a jump-to-stationary mutation
//! process on every feature.
//!
//! Node times are non-positive: leaves sit at `t = 0` and every parent is
//! strictly earlier than its children.

mod fixed;
mod greedy;
mod messages;
mod newick;

pub use fixed::{fixed_group_loglik, genetic_post_pred, FixedGrouping};
pub use greedy::greedy_rate1_build;
pub use messages::{upward_messages, TreeLikelihood, TreeMessages};
pub use newick::{from_newick, to_newick};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature reversible mutation chain: with rate `rate` the value jumps
/// to a fresh draw from `stationary[f]`. The stationary law is also the
/// root prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationModel {
    pub rate: f64,
    pub stationary: Vec<Vec<f64>>,
}

impl MutationModel {
    /// Uniform stationary law over each feature's values.
    pub fn uniform(rate: f64, arities: &[usize]) -> Result<Self> {
        Self::new(
            rate,
            arities
                .iter()
                .map(|&a| vec![1.0 / a as f64; a])
                .collect(),
        )
    }

    pub fn new(rate: f64, stationary: Vec<Vec<f64>>) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Argument(format!("mutation rate must be positive, got {rate}")));
        }
        for (f, pi) in stationary.iter().enumerate() {
            let s: f64 = pi.iter().sum();
            if (s - 1.0).abs() > 1e-9 || pi.iter().any(|&p| p < 0.0) {
                return Err(Error::Argument(format!(
                    "stationary law of feature {f} is not a distribution"
                )));
            }
        }
        Ok(Self { rate, stationary })
    }

    pub fn n_features(&self) -> usize {
        self.stationary.len()
    }

    /// Probability of *no* jump over `dt`.
    #[inline]
    pub(crate) fn stay(&self, dt: f64) -> f64 {
        (-self.rate * dt).exp()
    }

    /// Row-major `arity x arity` matrix `P[i][j] = P(child = j | parent = i)`.
    pub fn transition(&self, feature: usize, dt: f64) -> Result<Vec<f64>> {
        ctmc_transition(&self.stationary[feature], self.rate, dt)
    }
}

/// Transition matrix of the jump-to-stationary chain:
/// `e^{-rate dt} [i = j] + (1 - e^{-rate dt}) stationary[j]`.
pub fn ctmc_transition(stationary: &[f64], rate: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt >= 0.0) {
        return Err(Error::Argument(format!("time step must be nonnegative, got {dt}")));
    }
    let a = stationary.len();
    let stay = (-rate * dt).exp();
    let mut p = vec![0.0; a * a];
    for i in 0..a {
        for j in 0..a {
            p[i * a + j] = (1.0 - stay) * stationary[j] + if i == j { stay } else { 0.0 };
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub time: f64,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
}

/// Binary genealogy. Nodes `0..n_leaves` are the leaves (one per language in
/// dataset order); internal nodes follow in merge order, so the root is the
/// last node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalTree {
    n_leaves: usize,
    nodes: Vec<TreeNode>,
}

impl CoalTree {
    /// Builds a tree from merges `(child_a, child_b, time)` in creation
    /// order. Merge `i` creates node `n_leaves + i`.
    pub fn from_merges(n_leaves: usize, merges: &[(usize, usize, f64)]) -> Result<Self> {
        if n_leaves == 0 {
            return Err(Error::Argument("a tree needs at least one leaf".into()));
        }
        if merges.len() + 1 != n_leaves {
            return Err(Error::Validation(format!(
                "{} leaves need {} merges, got {}",
                n_leaves,
                n_leaves - 1,
                merges.len()
            )));
        }
        let mut nodes: Vec<TreeNode> = (0..n_leaves)
            .map(|_| TreeNode {
                time: 0.0,
                parent: None,
                children: None,
            })
            .collect();
        for (i, &(a, b, time)) in merges.iter().enumerate() {
            let id = n_leaves + i;
            for c in [a, b] {
                if c >= id || nodes[c].parent.is_some() || a == b {
                    return Err(Error::Validation(format!(
                        "merge {i} reuses or forward-references node {c}"
                    )));
                }
                if !(time < nodes[c].time) {
                    return Err(Error::Validation(format!(
                        "merge {i} at time {time} is not earlier than child {c} at {}",
                        nodes[c].time
                    )));
                }
            }
            nodes[a].parent = Some(id);
            nodes[b].parent = Some(id);
            nodes.push(TreeNode {
                time,
                parent: None,
                children: Some([a, b]),
            });
        }
        Ok(Self { n_leaves, nodes })
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id < self.n_leaves
    }

    /// Internal node ids.
    pub fn internal_nodes(&self) -> std::ops::Range<usize> {
        self.n_leaves..self.nodes.len()
    }

    /// Branch length above `id` (0 for the root).
    pub fn branch_length(&self, id: usize) -> f64 {
        self.nodes[id]
            .parent
            .map_or(0.0, |p| self.nodes[id].time - self.nodes[p].time)
    }

    /// Leaves below `id`, in ascending order.
    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(u) = stack.pop() {
            match self.nodes[u].children {
                Some([a, b]) => {
                    stack.push(a);
                    stack.push(b);
                }
                None => out.push(u),
            }
        }
        out.sort_unstable();
        out
    }

    /// Leaf sets for every node, computed bottom-up.
    pub fn all_leaf_sets(&self) -> Vec<Vec<usize>> {
        let mut sets: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            match node.children {
                None => sets.push(vec![id]),
                Some([a, b]) => {
                    let mut s = sets[a].clone();
                    s.extend_from_slice(&sets[b]);
                    s.sort_unstable();
                    sets.push(s);
                }
            }
        }
        sets
    }

    pub fn sibling(&self, id: usize) -> Option<usize> {
        let p = self.nodes[id].parent?;
        let [a, b] = self.nodes[p].children.expect("parent is internal");
        Some(if a == id { b } else { a })
    }

    /// Path from `id` up to and including the root.
    pub fn path_to_root(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut u = id;
        while let Some(p) = self.nodes[u].parent {
            path.push(p);
            u = p;
        }
        path
    }

    /// Checks the structural invariants.
    pub fn is_valid(&self) -> bool {
        if self.nodes.len() != 2 * self.n_leaves - 1 {
            return false;
        }
        let mut roots = 0;
        for (id, n) in self.nodes.iter().enumerate() {
            if self.is_leaf(id) != n.children.is_none() {
                return false;
            }
            if self.is_leaf(id) && n.time != 0.0 {
                return false;
            }
            match n.parent {
                Some(p) => {
                    if !(self.nodes[p].time < n.time) {
                        return false;
                    }
                    if !self.nodes[p].children.is_some_and(|c| c.contains(&id)) {
                        return false;
                    }
                }
                None => roots += 1,
            }
        }
        roots == 1 && self.nodes[self.root()].parent.is_none()
    }

    /// Internal nodes ordered from the most recent merge to the root.
    pub fn merge_order(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.internal_nodes().collect();
        ids.sort_by(|&a, &b| self.nodes[b].time.total_cmp(&self.nodes[a].time));
        ids
    }

    /// Log density of the merge times and topology under the n-coalescent:
    /// each merge with `k` lineages contributes `-C(k,2) δ_k`.
    pub fn coalescent_log_prior(&self) -> f64 {
        let mut lp = 0.0;
        let mut prev = 0.0;
        let mut k = self.n_leaves;
        for id in self.merge_order() {
            let t = self.nodes[id].time;
            let pairs = (k * (k - 1) / 2) as f64;
            lp -= pairs * (prev - t);
            prev = t;
            k -= 1;
        }
        lp
    }
}

/// Draws an n-coalescent genealogy: with `k` lineages the waiting time is
/// Exponential(k(k-1)/2) and the merging pair is uniform.
pub fn sample_prior_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CoalTree> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 leaves, got {n}")));
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    let mut t = 0.0;
    while active.len() > 1 {
        let k = active.len();
        let rate = (k * (k - 1) / 2) as f64;
        t -= Exp::new(rate).expect("positive rate").sample(rng);
        let i = rng.random_range(0..k);
        let mut j = rng.random_range(0..k - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (active[i], active[j]);
        let id = n + merges.len();
        merges.push((a, b, t));
        let (hi, lo) = (i.max(j), i.min(j));
        active.swap_remove(hi);
        active[lo] = id;
    }
    CoalTree::from_merges(n, &merges)
}
