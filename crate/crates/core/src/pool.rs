//! Collapsed symmetric-Dirichlet(1) categorical pools.
//!
//! Both area tables and fixed genetic groups keep one value-count vector per
//! feature; the parameters are integrated out, so prediction and scoring only
//! need the counts.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Value;

/// Maps (feature, value) pairs onto a flat count buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    offsets: Vec<usize>,
    arities: Vec<usize>,
}

impl FeatureLayout {
    pub fn new(arities: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(arities.len());
        let mut acc = 0;
        for &a in &arities {
            offsets.push(acc);
            acc += a;
        }
        Self { offsets, arities }
    }

    pub fn n_features(&self) -> usize {
        self.arities.len()
    }

    pub fn arity(&self, feature: usize) -> usize {
        self.arities[feature]
    }

    /// Start of `feature`'s block in a flat buffer.
    pub fn offset(&self, feature: usize) -> usize {
        self.offsets[feature]
    }

    pub fn width(&self) -> usize {
        self.offsets.last().map_or(0, |o| o + self.arities[self.arities.len() - 1])
    }

    fn slot(&self, feature: usize, value: Value) -> usize {
        debug_assert!(usize::from(value) < self.arities[feature]);
        self.offsets[feature] + usize::from(value)
    }
}

/// Per-feature value counts for one pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPool {
    counts: Vec<u32>,
    totals: Vec<u32>,
}

impl CountPool {
    pub fn empty(layout: &FeatureLayout) -> Self {
        Self {
            counts: vec![0; layout.width()],
            totals: vec![0; layout.n_features()],
        }
    }

    pub fn add(&mut self, layout: &FeatureLayout, feature: usize, value: Value) {
        self.counts[layout.slot(feature, value)] += 1;
        self.totals[feature] += 1;
    }

    pub fn remove(&mut self, layout: &FeatureLayout, feature: usize, value: Value) {
        let slot = layout.slot(feature, value);
        assert!(
            self.counts[slot] > 0,
            "removing absent value {value} of feature {feature}"
        );
        self.counts[slot] -= 1;
        self.totals[feature] -= 1;
    }

    pub fn count(&self, layout: &FeatureLayout, feature: usize, value: Value) -> u32 {
        self.counts[layout.slot(feature, value)]
    }

    pub fn total(&self, feature: usize) -> u32 {
        self.totals[feature]
    }

    pub fn feature_counts<'a>(&'a self, layout: &FeatureLayout, feature: usize) -> &'a [u32] {
        let start = layout.offsets[feature];
        &self.counts[start..start + layout.arities[feature]]
    }

    /// Posterior predictive `(count(value) + 1) / (total + arity)`.
    pub fn predictive(&self, layout: &FeatureLayout, feature: usize, value: Value) -> f64 {
        table_post_pred(
            self.feature_counts(layout, feature),
            usize::from(value),
            layout.arity(feature),
        )
    }

    /// Log marginal likelihood of every counted observation.
    pub fn log_marginal(&self, layout: &FeatureLayout) -> f64 {
        (0..layout.n_features())
            .map(|f| dirichlet_categorical_log_marginal(self.feature_counts(layout, f)))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.iter().all(|&t| t == 0)
    }
}

/// Symmetric-Dirichlet(1) posterior predictive for one categorical value.
pub fn table_post_pred(counts: &[u32], value: usize, arity: usize) -> f64 {
    debug_assert_eq!(counts.len(), arity);
    let total: u32 = counts.iter().sum();
    (f64::from(counts[value]) + 1.0) / (f64::from(total) + arity as f64)
}

/// `log P(sequence)` under a symmetric Dirichlet(1) prior:
/// `lnΓ(A) - lnΓ(A + n) + Σ_v lnΓ(1 + c_v)`.
pub fn dirichlet_categorical_log_marginal(counts: &[u32]) -> f64 {
    let arity = counts.len() as f64;
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    ln_gamma(arity) - ln_gamma(arity + f64::from(n))
        + counts
            .iter()
            .map(|&c| ln_gamma(1.0 + f64::from(c)))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_rule() {
        assert_eq!(table_post_pred(&[1, 2], 1, 2), 3.0 / 5.0);
        assert_eq!(table_post_pred(&[0, 0], 0, 2), 0.5);
        assert_eq!(table_post_pred(&[0, 0, 4], 2, 3), 5.0 / 7.0);
    }

    #[test]
    fn marginal_is_product_of_sequential_predictives() {
        let seq = [2usize, 0, 2, 1, 2, 2, 0];
        let mut counts = [0u32; 3];
        let mut log_p = 0.0;
        for &v in &seq {
            log_p += table_post_pred(&counts, v, 3).ln();
            counts[v] += 1;
        }
        assert!((dirichlet_categorical_log_marginal(&counts) - log_p).abs() < 1e-12);
    }

    #[test]
    fn pool_bookkeeping() {
        let layout = FeatureLayout::new(vec![2, 3]);
        assert_eq!(layout.width(), 5);
        let mut pool = CountPool::empty(&layout);
        pool.add(&layout, 1, 2);
        pool.add(&layout, 1, 2);
        pool.add(&layout, 0, 1);
        assert_eq!(pool.feature_counts(&layout, 1), &[0, 0, 2]);
        assert_eq!(pool.predictive(&layout, 1, 2), 3.0 / 5.0);
        pool.remove(&layout, 1, 2);
        assert_eq!(pool.total(1), 1);
        pool.remove(&layout, 1, 2);
        pool.remove(&layout, 0, 1);
        assert!(pool.is_empty());
    }
}
