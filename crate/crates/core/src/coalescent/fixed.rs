//! Known-tree mode: languages are pooled by genus or family, and each
//! (group, feature) pair is an independent collapsed Dirichlet-categorical.

use serde::{Deserialize, Serialize};

use crate::data::{ObservationMatrix, Value};
use crate::error::{Error, Result};
use crate::pool::{table_post_pred, CountPool, FeatureLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedGrouping {
    group_of: Vec<usize>,
    names: Vec<String>,
}

impl FixedGrouping {
    /// Groups languages by label; group ids follow first appearance.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut group_of = Vec::with_capacity(labels.len());
        for l in labels {
            let l = l.as_ref();
            if l.is_empty() {
                return Err(Error::Validation("empty group label".into()));
            }
            let g = match names.iter().position(|n| n == l) {
                Some(g) => g,
                None => {
                    names.push(l.to_string());
                    names.len() - 1
                }
            };
            group_of.push(g);
        }
        Ok(Self { group_of, names })
    }

    pub fn n_languages(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }

    pub fn group_of(&self, language: usize) -> usize {
        self.group_of[language]
    }

    pub fn name(&self, group: usize) -> &str {
        &self.names[group]
    }

    pub fn members(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == group)
            .map(|(n, _)| n)
    }

    /// Count pools over cells selected by `include`.
    pub fn pools<F>(&self, obs: &ObservationMatrix, layout: &FeatureLayout, include: F) -> Vec<CountPool>
    where
        F: Fn(usize, usize) -> bool,
    {
        let mut pools = vec![CountPool::empty(layout); self.n_groups()];
        for (n, f, v) in obs.known_cells() {
            if include(n, f) {
                pools[self.group_of[n]].add(layout, f, v);
            }
        }
        pools
    }
}

/// Collapsed log likelihood of the included cells, summed over groups and
/// features.
pub fn fixed_group_loglik<F>(
    grouping: &FixedGrouping,
    obs: &ObservationMatrix,
    layout: &FeatureLayout,
    include: F,
) -> f64
where
    F: Fn(usize, usize) -> bool,
{
    grouping
        .pools(obs, layout, include)
        .iter()
        .map(|p| p.log_marginal(layout))
        .sum()
}

/// Predictive probability of `value` at cell `(language, feature)` from the
/// language's group, counting included cells other than this one.
pub fn genetic_post_pred<F>(
    grouping: &FixedGrouping,
    obs: &ObservationMatrix,
    layout: &FeatureLayout,
    include: F,
    language: usize,
    feature: usize,
    value: Value,
) -> f64
where
    F: Fn(usize, usize) -> bool,
{
    let arity = layout.arity(feature);
    let mut counts = vec![0u32; arity];
    for m in grouping.members(grouping.group_of(language)) {
        if m == language || !include(m, feature) {
            continue;
        }
        if let Some(v) = obs.get(m, feature) {
            counts[usize::from(v)] += 1;
        }
    }
    table_post_pred(&counts, usize::from(value), arity)
}
