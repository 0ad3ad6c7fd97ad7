//! The genetic source of feature values: either a fixed grouping with one
//! collapsed pool per group, or a genealogy with collapsed node parameters.

use serde::{Deserialize, Serialize};

use crate::coalescent::{greedy_rate1_build, CoalTree, FixedGrouping, MutationModel, TreeLikelihood};
use crate::data::{Dataset, Value};
use crate::error::Result;
use crate::pool::{CountPool, FeatureLayout};

/// How the genetic side is modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneticSpec {
    /// Known grouping (genus or family).
    Fixed(FixedGrouping),
    /// Genealogy inferred by greedy refits.
    Tree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Genetic {
    Fixed {
        grouping: FixedGrouping,
        pools: Vec<CountPool>,
    },
    Tree(TreeLikelihood),
}

impl Genetic {
    /// Builds the genetic side over the cells where `genetic(n, f)` holds.
    pub fn build<F>(
        spec: &GeneticSpec,
        data: &Dataset,
        layout: &FeatureLayout,
        mutation: &MutationModel,
        tree: Option<CoalTree>,
        genetic: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize) -> bool,
    {
        Ok(match spec {
            GeneticSpec::Fixed(grouping) => Genetic::Fixed {
                pools: grouping.pools(&data.observations, layout, &genetic),
                grouping: grouping.clone(),
            },
            GeneticSpec::Tree => {
                let tree = match tree {
                    Some(t) => t,
                    None => greedy_rate1_build(&data.observations, mutation, &genetic)?,
                };
                Genetic::Tree(Self::tree_likelihood(tree, data, mutation, genetic))
            }
        })
    }

    fn tree_likelihood<F>(tree: CoalTree, data: &Dataset, mutation: &MutationModel, genetic: F) -> TreeLikelihood
    where
        F: Fn(usize, usize) -> bool,
    {
        TreeLikelihood::new(tree, mutation.clone(), |n, f| {
            data.observations.get(n, f).filter(|_| genetic(n, f))
        })
    }

    /// Predictive probability of `value` at a cell that is currently not
    /// counted on the genetic side.
    pub fn predictive(&self, layout: &FeatureLayout, language: usize, feature: usize, value: Value) -> f64 {
        match self {
            Genetic::Fixed { grouping, pools } => {
                pools[grouping.group_of(language)].predictive(layout, feature, value)
            }
            Genetic::Tree(lik) => lik.leaf_predictive(language, feature)[usize::from(value)],
        }
    }

    /// Whether `predictive` at a counted cell already leaves that cell out.
    pub fn predictive_excludes_own_cell(&self) -> bool {
        matches!(self, Genetic::Tree(_))
    }

    pub fn add(&mut self, layout: &FeatureLayout, language: usize, feature: usize, value: Value) {
        match self {
            Genetic::Fixed { grouping, pools } => {
                pools[grouping.group_of(language)].add(layout, feature, value)
            }
            Genetic::Tree(lik) => lik.set_leaf(language, feature, Some(value)),
        }
    }

    pub fn remove(&mut self, layout: &FeatureLayout, language: usize, feature: usize, value: Value) {
        match self {
            Genetic::Fixed { grouping, pools } => {
                pools[grouping.group_of(language)].remove(layout, feature, value)
            }
            Genetic::Tree(lik) => lik.set_leaf(language, feature, None),
        }
    }

    /// Collapsed log likelihood of the genetic cells.
    pub fn log_lik(&self, layout: &FeatureLayout) -> f64 {
        match self {
            Genetic::Fixed { pools, .. } => pools.iter().map(|p| p.log_marginal(layout)).sum(),
            Genetic::Tree(lik) => lik.log_lik(),
        }
    }

    /// Coalescent prior of the tree; zero in fixed mode.
    pub fn log_prior(&self) -> f64 {
        match self {
            Genetic::Fixed { .. } => 0.0,
            Genetic::Tree(lik) => lik.tree().coalescent_log_prior(),
        }
    }

    pub fn tree(&self) -> Option<&CoalTree> {
        match self {
            Genetic::Fixed { .. } => None,
            Genetic::Tree(lik) => Some(lik.tree()),
        }
    }

    /// Refits the tree greedily on the current genetic cells.
    pub fn refit<F>(&mut self, data: &Dataset, genetic: F) -> Result<()>
    where
        F: Fn(usize, usize) -> bool,
    {
        if let Genetic::Tree(lik) = self {
            let mutation = lik.model().clone();
            let tree = greedy_rate1_build(&data.observations, &mutation, &genetic)?;
            *lik = Self::tree_likelihood(tree, data, &mutation, genetic);
        }
        Ok(())
    }

    /// True if the incremental statistics equal a rebuild from scratch.
    pub fn matches_recount<F>(&self, data: &Dataset, layout: &FeatureLayout, genetic: F) -> bool
    where
        F: Fn(usize, usize) -> bool,
    {
        match self {
            Genetic::Fixed { grouping, pools } => {
                *pools == grouping.pools(&data.observations, layout, genetic)
            }
            Genetic::Tree(lik) => {
                let fresh = Self::tree_likelihood(lik.tree().clone(), data, lik.model(), genetic);
                (fresh.log_lik() - lik.log_lik()).abs() <= 1e-8 * (1.0 + lik.log_lik().abs())
            }
        }
    }
}
