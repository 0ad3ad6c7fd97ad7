//! Upward (pruning) messages on a genealogy.
//!
//! For node `u` and feature `f`, `beta_u(j)` is proportional to the
//! probability of the evidence below `u` given `x_u = j`. Messages are kept
//! normalized with a separate log scale so deep trees do not underflow.

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use super::{CoalTree, MutationModel};
use crate::data::{ObservationMatrix, Value};
use crate::pool::FeatureLayout;

/// Messages for every node and feature after one full upward pass.
#[derive(Debug, Clone)]
pub struct TreeMessages {
    layout: FeatureLayout,
    beta: Vec<f64>,
    log_scale: Vec<f64>,
    pub log_lik_per_feature: Vec<f64>,
    pub log_lik: f64,
}

impl TreeMessages {
    /// Normalized message at `node` for `feature`.
    pub fn message(&self, node: usize, feature: usize) -> &[f64] {
        let w = self.layout.width();
        let start = node * w + self.layout.offset(feature);
        &self.beta[start..start + self.layout.arity(feature)]
    }

    /// Accumulated log normalizer of the message at `node`.
    pub fn log_scale(&self, node: usize, feature: usize) -> f64 {
        self.log_scale[node * self.layout.n_features() + feature]
    }
}

fn layout_of(model: &MutationModel) -> FeatureLayout {
    FeatureLayout::new(model.stationary.iter().map(Vec::len).collect())
}

/// Message sent from a child with normalized `beta` across a branch with
/// no-jump probability `stay`: `stay * beta(i) + (1 - stay) * <pi, beta>`.
/// Per-feature scratch space; arities rarely exceed this.
type Scratch = SmallVec<[f64; 8]>;

#[inline]
fn branch_message(beta: &[f64], pi: &[f64], stay: f64, out: &mut [f64]) {
    let mix: f64 = pi.iter().zip(beta).map(|(p, b)| p * b).sum();
    for (o, &b) in out.iter_mut().zip(beta) {
        *o = stay * b + (1.0 - stay) * mix;
    }
}

/// Full upward pass. Leaf cells contribute an indicator message when
/// observed and `include(language, feature)` holds, and a flat message
/// otherwise.
pub fn upward_messages<F>(
    tree: &CoalTree,
    obs: &ObservationMatrix,
    model: &MutationModel,
    include: F,
) -> TreeMessages
where
    F: Fn(usize, usize) -> bool,
{
    let evidence = |n: usize, f: usize| obs.get(n, f).filter(|_| include(n, f));
    let lik = TreeLikelihood::new(tree.clone(), model.clone(), evidence);
    TreeMessages {
        log_lik_per_feature: (0..model.n_features()).map(|f| lik.feature_log_lik(f)).collect(),
        log_lik: lik.log_lik(),
        layout: lik.layout,
        beta: lik.beta,
        log_scale: lik.log_scale,
    }
}

/// Incrementally maintained messages for a fixed tree. Changing one leaf
/// cell only recomputes the path from that leaf to the root.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeLikelihood {
    tree: CoalTree,
    model: MutationModel,
    layout: FeatureLayout,
    evidence: Vec<Option<Value>>,
    beta: Vec<f64>,
    log_scale: Vec<f64>,
    stay: Vec<f64>,
}

impl TreeLikelihood {
    pub fn new<F>(tree: CoalTree, model: MutationModel, evidence: F) -> Self
    where
        F: Fn(usize, usize) -> Option<Value>,
    {
        let layout = layout_of(&model);
        let n_features = layout.n_features();
        let n_nodes = tree.n_nodes();
        let mut ev = vec![None; tree.n_leaves() * n_features];
        for n in 0..tree.n_leaves() {
            for f in 0..n_features {
                ev[n * n_features + f] = evidence(n, f);
            }
        }
        let stay = (0..n_nodes).map(|u| model.stay(tree.branch_length(u))).collect();
        let mut lik = Self {
            beta: vec![0.0; n_nodes * layout.width()],
            log_scale: vec![0.0; n_nodes * n_features],
            evidence: ev,
            tree,
            model,
            layout,
            stay,
        };
        for u in 0..n_nodes {
            for f in 0..n_features {
                lik.recompute(u, f);
            }
        }
        lik
    }

    pub fn tree(&self) -> &CoalTree {
        &self.tree
    }

    pub fn model(&self) -> &MutationModel {
        &self.model
    }

    fn n_features(&self) -> usize {
        self.layout.n_features()
    }

    fn range(&self, node: usize, feature: usize) -> std::ops::Range<usize> {
        let start = node * self.layout.width() + self.layout.offset(feature);
        start..start + self.layout.arity(feature)
    }

    fn recompute(&mut self, u: usize, f: usize) {
        let arity = self.layout.arity(f);
        let r = self.range(u, f);
        let nf = self.n_features();
        match self.tree.node(u).children {
            None => {
                let slot = &mut self.beta[r];
                match self.evidence[u * nf + f] {
                    Some(v) => {
                        slot.fill(0.0);
                        slot[usize::from(v)] = 1.0;
                    }
                    None => slot.fill(1.0),
                }
                self.log_scale[u * nf + f] = 0.0;
            }
            Some([a, b]) => {
                let pi = &self.model.stationary[f];
                let mut ma: Scratch = smallvec![0.0; arity];
                let mut mb: Scratch = smallvec![0.0; arity];
                branch_message(&self.beta[self.range(a, f)], pi, self.stay[a], &mut ma);
                branch_message(&self.beta[self.range(b, f)], pi, self.stay[b], &mut mb);
                let mut s = 0.0;
                for i in 0..arity {
                    ma[i] *= mb[i];
                    s += ma[i];
                }
                for (dst, m) in self.beta[r].iter_mut().zip(&ma) {
                    *dst = m / s;
                }
                self.log_scale[u * nf + f] =
                    self.log_scale[a * nf + f] + self.log_scale[b * nf + f] + s.ln();
            }
        }
    }

    /// Log likelihood of the evidence on `feature`.
    pub fn feature_log_lik(&self, feature: usize) -> f64 {
        let root = self.tree.root();
        let pi = &self.model.stationary[feature];
        let inner: f64 = pi
            .iter()
            .zip(&self.beta[self.range(root, feature)])
            .map(|(p, b)| p * b)
            .sum();
        self.log_scale[root * self.n_features() + feature] + inner.ln()
    }

    pub fn log_lik(&self) -> f64 {
        (0..self.n_features()).map(|f| self.feature_log_lik(f)).sum()
    }

    pub fn leaf_evidence(&self, language: usize, feature: usize) -> Option<Value> {
        self.evidence[language * self.n_features() + feature]
    }

    /// Replaces the evidence at one leaf cell and refreshes its root path.
    pub fn set_leaf(&mut self, language: usize, feature: usize, value: Option<Value>) {
        let nf = self.n_features();
        if self.evidence[language * nf + feature] == value {
            return;
        }
        self.evidence[language * nf + feature] = value;
        let mut u = Some(language);
        while let Some(node) = u {
            self.recompute(node, feature);
            u = self.tree.node(node).parent;
        }
    }

    /// Predictive distribution of leaf `language` on `feature` given all
    /// other evidence (the leaf's own evidence is ignored).
    pub fn leaf_predictive(&self, language: usize, feature: usize) -> Vec<f64> {
        let arity = self.layout.arity(feature);
        let pi = &self.model.stationary[feature];
        let path = self.tree.path_to_root(language);
        let mut alpha: Scratch = pi.iter().copied().collect();
        let mut msib: Scratch = smallvec![0.0; arity];
        // walk from the root down to the leaf
        for &child in path[..path.len() - 1].iter().rev() {
            let sib = self.tree.sibling(child).expect("non-root has a sibling");
            branch_message(&self.beta[self.range(sib, feature)], pi, self.stay[sib], &mut msib);
            let stay = self.stay[child];
            let mut mass = 0.0;
            for i in 0..arity {
                alpha[i] *= msib[i];
                mass += alpha[i];
            }
            let mut s = 0.0;
            for j in 0..arity {
                alpha[j] = stay * alpha[j] + (1.0 - stay) * pi[j] * mass;
                s += alpha[j];
            }
            alpha.iter_mut().for_each(|a| *a /= s);
        }
        let s: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= s);
        alpha.into_vec()
    }
}
