//! Posterior summaries: how genetic each feature is, per-category
//! aggregates, held-out prediction, area listings, and the flat clustering
//! baselines.

use std::cmp::Ordering;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::data::{Dataset, HeldOutCell, Value};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::metrics::Clustering;
use crate::sampler::{ModelConfig, ModelState, SampleRecord, SourcePolicy};

/// `P(π < 0.5)` for `π ∼ Beta(1 + areal, 1 + genetic)`.
pub fn genetic_prob_from_counts(areal: u32, genetic: u32) -> f64 {
    beta_reg(1.0 + f64::from(areal), 1.0 + f64::from(genetic), 0.5)
}

/// Mean over samples of `P(π_f < 0.5 | sample)`.
pub fn feature_genetic_prob(samples: &[SampleRecord], f: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let (areal, genetic) = s.source_counts[f];
            genetic_prob_from_counts(areal, genetic)
        })
        .sum();
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureArealness {
    pub feature: usize,
    pub id: u32,
    pub name: String,
    pub category: String,
    pub p_genetic: f64,
}

pub fn arealness(data: &Dataset, samples: &[SampleRecord]) -> Result<Vec<FeatureArealness>> {
    data.features
        .iter()
        .enumerate()
        .map(|(f, spec)| {
            Ok(FeatureArealness {
                feature: f,
                id: spec.id,
                name: spec.name.clone(),
                category: spec.category.clone(),
                p_genetic: feature_genetic_prob(samples, f)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub mean_p_genetic: f64,
    pub n_features: usize,
}

/// Mean `p_genetic` per category, ascending (most areal first); equal
/// means are ordered by category name.
pub fn category_report(rows: &[FeatureArealness]) -> Result<Vec<CategoryRow>> {
    let mut out: Vec<CategoryRow> = Vec::new();
    for r in rows {
        if r.category.is_empty() {
            return Err(Error::Validation(format!("feature {} has no category", r.id)));
        }
        match out.iter_mut().find(|c| c.category == r.category) {
            Some(c) => {
                c.mean_p_genetic += r.p_genetic;
                c.n_features += 1;
            }
            None => out.push(CategoryRow {
                category: r.category.clone(),
                mean_p_genetic: r.p_genetic,
                n_features: 1,
            }),
        }
    }
    for c in &mut out {
        c.mean_p_genetic /= c.n_features as f64;
    }
    out.sort_by(|a, b| {
        a.mean_p_genetic
            .total_cmp(&b.mean_p_genetic)
            .then_with(|| a.category.cmp(&b.category))
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictMode {
    /// Use the area if the feature is identified as areal, else the genealogy.
    Hard,
    /// Mix the two predictives by the posterior areal probability.
    Mixture,
}

/// Per-feature source summaries used for prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWeights {
    /// `P(π_f < 0.5)` averaged over samples.
    pub p_genetic: Vec<f64>,
    /// Posterior probability that a new cell of feature `f` is areal,
    /// `E[π_f]` averaged over samples.
    pub areal_weight: Vec<f64>,
}

impl SourceWeights {
    pub fn from_samples(samples: &[SampleRecord], n_features: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("no samples".into()));
        }
        let p_genetic = (0..n_features)
            .map(|f| feature_genetic_prob(samples, f))
            .collect::<Result<_>>()?;
        let areal_weight = (0..n_features)
            .map(|f| {
                samples
                    .iter()
                    .map(|s| {
                        let (a, g) = s.source_counts[f];
                        (f64::from(a) + 1.0) / (f64::from(a + g) + 2.0)
                    })
                    .sum::<f64>()
                    / samples.len() as f64
            })
            .collect();
        Ok(Self {
            p_genetic,
            areal_weight,
        })
    }

    /// Every feature genetic: the no-contact baseline.
    pub fn all_genetic(n_features: usize) -> Self {
        Self {
            p_genetic: vec![1.0; n_features],
            areal_weight: vec![0.0; n_features],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub accuracy: f64,
    pub mean_log_prob: f64,
    pub n_cells: usize,
}

/// Predictive distribution over the values of held-out cell `(n, f)`.
pub fn cell_predictive(
    map: &ModelState,
    weights: &SourceWeights,
    n: usize,
    f: usize,
    mode: PredictMode,
) -> Vec<f64> {
    let arity = map.layout().arity(f);
    let w = match mode {
        PredictMode::Hard => {
            if weights.p_genetic[f] < 0.5 {
                1.0
            } else {
                0.0
            }
        }
        PredictMode::Mixture => weights.areal_weight[f],
    };
    (0..arity)
        .map(|v| {
            let v = v as Value;
            let mut p = 0.0;
            if w > 0.0 {
                p += w * map.areal_predictive(n, f, v);
            }
            if w < 1.0 {
                p += (1.0 - w) * map.genetic_predictive(n, f, v);
            }
            p
        })
        .collect()
}

/// Scores held-out cells under the MAP state's statistics. Held-out cells
/// must be missing from the training data the state was fit on.
pub fn predict_heldout(
    train: &Dataset,
    map: &ModelState,
    weights: &SourceWeights,
    heldout: &[HeldOutCell],
    mode: PredictMode,
) -> Result<Prediction> {
    if heldout.is_empty() {
        return Err(Error::Argument("held-out set is empty".into()));
    }
    let (mut correct, mut log_prob) = (0usize, 0.0);
    for c in heldout {
        if c.language >= train.n_languages() || c.feature >= train.n_features() {
            return Err(Error::Validation(format!(
                "held-out cell ({}, {}) is outside the dataset",
                c.language, c.feature
            )));
        }
        if train.observations.is_known(c.language, c.feature) {
            return Err(Error::Validation(format!(
                "held-out cell ({}, {}) is also a training cell",
                c.language, c.feature
            )));
        }
        let p = cell_predictive(map, weights, c.language, c.feature, mode);
        let argmax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(v, _)| v)
            .expect("arity ≥ 1");
        correct += usize::from(argmax == usize::from(c.value));
        log_prob += p[usize::from(c.value)].ln();
    }
    let n = heldout.len() as f64;
    Ok(Prediction {
        accuracy: correct as f64 / n,
        mean_log_prob: log_prob / n,
        n_cells: heldout.len(),
    })
}

/// State with every observed cell attributed to the genealogy; with a tree
/// genealogy this is the vanilla coalescent fit on all cells.
pub fn genetic_baseline(data: &Dataset, cfg: &ModelConfig, seed: u64) -> Result<ModelState> {
    let mut cfg = cfg.clone();
    cfg.sources = SourcePolicy::AllGenetic;
    ModelState::init(data, &cfg, ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenusGroup {
    pub genus: String,
    pub languages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub table_id: u64,
    pub center: GeoPoint,
    pub size: usize,
    pub genera: Vec<GenusGroup>,
}

/// Areas of the MAP state with at least `min_size` members (and, if asked,
/// at least two genera), largest first; members grouped by genus.
pub fn area_report(
    data: &Dataset,
    map: &ModelState,
    min_size: usize,
    require_multi_genus: bool,
) -> Vec<AreaSummary> {
    let mut out: Vec<(usize, AreaSummary)> = Vec::new();
    for t in map.areas().tables() {
        if t.size() < min_size {
            continue;
        }
        let mut genera: Vec<GenusGroup> = Vec::new();
        for &m in t.members() {
            let l = &data.languages[m];
            match genera.iter_mut().find(|g| g.genus == l.genus) {
                Some(g) => g.languages.push(l.name.clone()),
                None => genera.push(GenusGroup {
                    genus: l.genus.clone(),
                    languages: vec![l.name.clone()],
                }),
            }
        }
        if require_multi_genus && genera.len() < 2 {
            continue;
        }
        genera.sort_by(|a, b| a.genus.cmp(&b.genus));
        for g in &mut genera {
            g.languages.sort();
        }
        out.push((
            t.members()[0],
            AreaSummary {
                table_id: t.id.0,
                center: t.center,
                size: t.size(),
                genera,
            },
        ));
    }
    out.sort_by(|a, b| b.1.size.cmp(&a.1.size).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(_, s)| s).collect()
}

/// Area partition of the MAP state as a clustering of languages.
pub fn map_clustering(map: &ModelState) -> Clustering {
    Clustering::new(map.areas().partition())
}

/// One-hot encoding; a missing cell contributes an all-zero block.
fn one_hot(data: &Dataset) -> Vec<Vec<f64>> {
    let width: usize = data.features.iter().map(|f| f.arity).sum();
    (0..data.n_languages())
        .map(|n| {
            let mut row = vec![0.0; width];
            let mut off = 0;
            for (f, spec) in data.features.iter().enumerate() {
                if let Some(v) = data.observations.get(n, f) {
                    row[off + usize::from(v)] = 1.0;
                }
                off += spec.arity;
            }
            row
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's K-means on one-hot feature vectors with k-means++ seeding.
pub fn kmeans(data: &Dataset, k: usize, seed: u64) -> Result<Clustering> {
    let x = one_hot(data);
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k must lie in [1, {n}], got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![x[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d: Vec<f64> = x
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(x[next].clone());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in x.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(p, &centers[a])
                        .partial_cmp(&sq_dist(p, &centers[b]))
                        .unwrap_or(Ordering::Equal)
                })
                .expect("k ≥ 1");
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = x.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Clustering::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::areal::PyConfig;
    use crate::coalescent::FixedGrouping;
    use crate::sampler::tests::dataset;
    use crate::sampler::{GeneticSpec, SnapshotTable, StateSnapshot};

    fn binomial_tail_half(a: u32, b: u32) -> f64 {
        // I_{1/2}(a, b) = P(Binomial(a + b − 1, 1/2) ≥ a)
        let n = a + b - 1;
        let mut c = 1.0f64;
        let mut total = 0.0;
        for j in 0..=n {
            if j >= a {
                total += c;
            }
            c = c * f64::from(n - j) / f64::from(j + 1);
        }
        total / 2f64.powi(n as i32)
    }

    #[test]
    fn analytic_genetic_probabilities() {
        assert!((genetic_prob_from_counts(0, 0) - 0.5).abs() < 1e-12);
        assert!((genetic_prob_from_counts(1, 0) - 0.25).abs() < 1e-12);
        assert!((genetic_prob_from_counts(0, 10) - (1.0 - 0.5f64.powi(11))).abs() < 1e-12);
        for a in 0..30 {
            for b in 0..30 {
                let want = binomial_tail_half(a + 1, b + 1);
                assert!((genetic_prob_from_counts(a, b) - want).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn genetic_prob_is_antitone_in_areal_count() {
        for total in 0..60u32 {
            for a in 0..total {
                assert!(genetic_prob_from_counts(a + 1, total - a - 1) <= genetic_prob_from_counts(a, total - a));
            }
        }
    }

    #[test]
    fn categories_sort_with_name_ties() {
        let row = |c: &str, p: f64| FeatureArealness {
            feature: 0,
            id: 0,
            name: String::new(),
            category: c.into(),
            p_genetic: p,
        };
        let r = category_report(&[row("Word Order", 0.9), row("Lexicon", 0.4), row("Phonology", 0.4), row("Lexicon", 0.6)]).unwrap();
        let names: Vec<&str> = r.iter().map(|c| c.category.as_str()).collect();
        assert_eq!(names, ["Phonology", "Lexicon", "Word Order"]);
        assert!((r[1].mean_p_genetic - 0.5).abs() < 1e-15);
        let one = category_report(&[row("X", 0.3)]).unwrap();
        assert_eq!(one[0].mean_p_genetic, 0.3);
        assert_eq!(one[0].n_features, 1);
    }

    fn five_language_state() -> (Dataset, ModelState) {
        // genus a: languages 0..3 observe value 1; language 3 is held out
        let d = dataset(
            &[(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (0.0, 3.0), (40.0, 40.0)],
            &[&[Some(1)], &[Some(1)], &[Some(1)], &[None], &[None]],
            &[2],
        );
        let g = FixedGrouping::from_labels(&["a", "a", "a", "a", "b"]).unwrap();
        let cfg = ModelConfig::new(&d, PyConfig::default(), GeneticSpec::Fixed(g)).unwrap();
        let snap = StateSnapshot {
            z: vec![Some(false), Some(false), Some(false), None, None],
            tables: (0..5)
                .map(|i| SnapshotTable {
                    center: d.languages[i].location,
                    members: vec![i],
                })
                .collect(),
            tree: None,
            log_prob: 0.0,
        };
        let s = ModelState::from_snapshot(&d, &cfg, &snap, ChaCha8Rng::seed_from_u64(0)).unwrap();
        (d, s)
    }

    #[test]
    fn laplace_prediction_and_singleton_area() {
        let (d, s) = five_language_state();
        let held = [HeldOutCell { language: 3, feature: 0, value: 1 }];
        let w = SourceWeights::all_genetic(1);
        let p = predict_heldout(&d, &s, &w, &held, PredictMode::Hard).unwrap();
        assert_eq!(p.accuracy, 1.0);
        assert!((p.mean_log_prob - (4.0f64 / 5.0).ln()).abs() < 1e-15);
        let areal = SourceWeights { p_genetic: vec![0.1], areal_weight: vec![1.0] };
        let q = cell_predictive(&s, &areal, 3, 0, PredictMode::Hard);
        assert_eq!(q, vec![0.5, 0.5]);
        // hard and mixture agree when the weights are degenerate
        for w in [SourceWeights::all_genetic(1), areal] {
            assert_eq!(
                cell_predictive(&s, &w, 3, 0, PredictMode::Hard),
                cell_predictive(&s, &w, 3, 0, PredictMode::Mixture)
            );
        }
        // training cells and unknown languages are rejected
        let bad = [HeldOutCell { language: 0, feature: 0, value: 1 }];
        assert!(predict_heldout(&d, &s, &w_all(), &bad, PredictMode::Hard).is_err());
        let bad = [HeldOutCell { language: 9, feature: 0, value: 1 }];
        assert!(predict_heldout(&d, &s, &w_all(), &bad, PredictMode::Hard).is_err());
        assert!(predict_heldout(&d, &s, &w_all(), &[], PredictMode::Hard).is_err());
    }

    fn w_all() -> SourceWeights {
        SourceWeights::all_genetic(1)
    }

    #[test]
    fn area_report_filters() {
        let (d, s) = five_language_state();
        assert!(area_report(&d, &s, 2, false).is_empty());
        assert_eq!(area_report(&d, &s, 1, false).len(), 5);
    }

    #[test]
    fn kmeans_separates_obvious_clusters() {
        let rows: Vec<Vec<Option<Value>>> = (0..10)
            .map(|i| if i < 5 { vec![Some(0); 4] } else { vec![Some(1); 4] })
            .collect();
        let rows: Vec<&[Option<Value>]> = rows.iter().map(|r| r.as_slice()).collect();
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (0.0, i as f64)).collect();
        let d = dataset(&pts, &rows, &[2, 2, 2, 2]);
        let c = kmeans(&d, 2, 3).unwrap();
        let l = c.labels();
        assert!(l[..5].iter().all(|&x| x == l[0]) && l[5..].iter().all(|&x| x == l[5]) && l[0] != l[5]);
        assert!(kmeans(&d, 11, 0).is_err());
        assert_eq!(kmeans(&d, 2, 3).unwrap(), c);
    }
}
