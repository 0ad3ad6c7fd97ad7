//! Clustering metrics against gold areas and tree metrics against gold
//! genealogical labels. Every score is oriented so that higher is better and
//! identical inputs score 1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::coalescent::CoalTree;
use crate::error::{Error, Result};

/// A total partition of items `0..n`, as one cluster id per item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    labels: Vec<usize>,
}

impl Clustering {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    /// Clusters by arbitrary string labels (e.g. genus names).
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let labels = names
            .iter()
            .map(|s| {
                let next = ids.len();
                *ids.entry(s.as_ref()).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

fn check_universe(c: &Clustering, g: &Clustering) -> Result<()> {
    if c.len() != g.len() {
        return Err(Error::UniverseMismatch {
            left: c.len(),
            right: g.len(),
        });
    }
    Ok(())
}

/// Contingency counts plus row and column marginals.
struct Contingency {
    joint: BTreeMap<(usize, usize), u64>,
    rows: BTreeMap<usize, u64>,
    cols: BTreeMap<usize, u64>,
    n: u64,
}

impl Contingency {
    fn new(c: &Clustering, g: &Clustering) -> Self {
        let mut t = Self {
            joint: BTreeMap::new(),
            rows: BTreeMap::new(),
            cols: BTreeMap::new(),
            n: c.len() as u64,
        };
        for (&a, &b) in c.labels.iter().zip(&g.labels) {
            *t.joint.entry((a, b)).or_default() += 1;
            *t.rows.entry(a).or_default() += 1;
            *t.cols.entry(b).or_default() += 1;
        }
        t
    }
}

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Same-cluster pair counts: (both, in c, in g).
fn pair_counts(t: &Contingency) -> (u64, u64, u64) {
    let both = t.joint.values().map(|&k| pairs(k)).sum();
    let in_c = t.rows.values().map(|&k| pairs(k)).sum();
    let in_g = t.cols.values().map(|&k| pairs(k)).sum();
    (both, in_c, in_g)
}

/// Fraction of item pairs on which `c` and `g` agree.
pub fn rand_index(c: &Clustering, g: &Clustering) -> Result<f64> {
    check_universe(c, g)?;
    let t = Contingency::new(c, g);
    let total = pairs(t.n);
    if total == 0 {
        return Ok(1.0);
    }
    let (both, in_c, in_g) = pair_counts(&t);
    let agree = total + 2 * both - in_c - in_g;
    Ok(agree as f64 / total as f64)
}

/// F1 over same-cluster pairs, with `g` as the reference.
pub fn pairwise_f(c: &Clustering, g: &Clustering) -> Result<f64> {
    check_universe(c, g)?;
    let t = Contingency::new(c, g);
    let (both, in_c, in_g) = pair_counts(&t);
    Ok(match (in_c, in_g) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let p = both as f64 / in_c as f64;
            let r = both as f64 / in_g as f64;
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        }
    })
}

/// `1 − moves / n`, where moving an item means relabeling it; each cluster
/// of `c` keeps its largest overlap with a cluster of `g`. Directional:
/// `c` is the hypothesis and `g` the gold standard.
pub fn normalized_edit(c: &Clustering, g: &Clustering) -> Result<f64> {
    check_universe(c, g)?;
    if c.is_empty() {
        return Ok(1.0);
    }
    let t = Contingency::new(c, g);
    let mut best: BTreeMap<usize, u64> = BTreeMap::new();
    for (&(a, _), &k) in &t.joint {
        let e = best.entry(a).or_default();
        *e = (*e).max(k);
    }
    let kept: u64 = best.values().sum();
    Ok(1.0 - (t.n - kept) as f64 / t.n as f64)
}

/// `1 − VI(c, g) / ln n` with natural logarithms; 1 when `n < 2`.
pub fn nvi(c: &Clustering, g: &Clustering) -> Result<f64> {
    check_universe(c, g)?;
    if c.len() < 2 {
        return Ok(1.0);
    }
    let t = Contingency::new(c, g);
    let n = t.n as f64;
    let h = |m: &BTreeMap<usize, u64>| -> f64 {
        m.values()
            .map(|&k| {
                let p = k as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_joint: f64 = t
        .joint
        .values()
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.ln()
        })
        .sum();
    // VI = H(C|G) + H(G|C) = 2 H(C,G) − H(C) − H(G)
    let vi = (2.0 * h_joint - h(&t.rows) - h(&t.cols)).max(0.0);
    Ok(1.0 - vi / n.ln())
}

fn label_ids<S: AsRef<str>>(tree: &CoalTree, labels: &[S]) -> Result<(Vec<usize>, usize)> {
    if labels.len() != tree.n_leaves() {
        return Err(Error::UniverseMismatch {
            left: tree.n_leaves(),
            right: labels.len(),
        });
    }
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        let l = l.as_ref();
        if l.is_empty() {
            return Err(Error::Validation(format!("leaf {i} is unlabeled")));
        }
        let next = ids.len();
        out.push(*ids.entry(l).or_insert(next));
    }
    Ok((out, ids.len()))
}

/// Per-node label histograms, children before parents.
fn histograms(tree: &CoalTree, ids: &[usize], k: usize) -> Vec<Vec<u32>> {
    let mut hist = vec![vec![0u32; k]; tree.n_nodes()];
    for (leaf, &l) in ids.iter().enumerate() {
        hist[leaf][l] = 1;
    }
    for u in tree.internal_nodes() {
        let [a, b] = tree.node(u).children.expect("internal node");
        hist[u] = hist[a].iter().zip(&hist[b]).map(|(x, y)| x + y).collect();
    }
    hist
}

/// Dendrogram purity: over all unordered pairs of leaves sharing a label,
/// the mean fraction of leaves under their lowest common ancestor that
/// carry that label. 1 when no label is shared.
pub fn purity<S: AsRef<str>>(tree: &CoalTree, labels: &[S]) -> Result<f64> {
    let (ids, k) = label_ids(tree, labels)?;
    let hist = histograms(tree, &ids, k);
    let (mut total, mut n_pairs) = (0.0, 0u64);
    for u in tree.internal_nodes() {
        let [a, b] = tree.node(u).children.expect("internal node");
        let size: u32 = hist[u].iter().sum();
        for l in 0..k {
            let p = u64::from(hist[a][l]) * u64::from(hist[b][l]);
            if p > 0 {
                n_pairs += p;
                total += p as f64 * f64::from(hist[u][l]) / f64::from(size);
            }
        }
    }
    Ok(if n_pairs == 0 { 1.0 } else { total / n_pairs as f64 })
}

/// Fraction of internal nodes whose leaves all share one label.
pub fn subtree_score<S: AsRef<str>>(tree: &CoalTree, labels: &[S]) -> Result<f64> {
    let (ids, k) = label_ids(tree, labels)?;
    let hist = histograms(tree, &ids, k);
    let internal = tree.internal_nodes();
    if internal.is_empty() {
        return Ok(1.0);
    }
    let pure = internal
        .clone()
        .filter(|&u| hist[u].iter().filter(|&&c| c > 0).count() == 1)
        .count();
    Ok(pure as f64 / internal.len() as f64)
}

/// Leave-one-out accuracy: each leaf is predicted as the majority label of
/// its sibling subtree; ties go to the globally more frequent label, then
/// to the label seen first.
pub fn loo_accuracy<S: AsRef<str>>(tree: &CoalTree, labels: &[S]) -> Result<f64> {
    let (ids, k) = label_ids(tree, labels)?;
    let hist = histograms(tree, &ids, k);
    let mut global = vec![0u32; k];
    for &l in &ids {
        global[l] += 1;
    }
    let n = tree.n_leaves();
    if n < 2 {
        return Ok(1.0);
    }
    let correct = (0..n)
        .filter(|&leaf| {
            let s = tree.sibling(leaf).expect("non-root leaf has a sibling");
            let pred = (0..k)
                .max_by(|&x, &y| {
                    hist[s][x]
                        .cmp(&hist[s][y])
                        .then(global[x].cmp(&global[y]))
                        .then(y.cmp(&x))
                })
                .expect("at least one label");
            pred == ids[leaf]
        })
        .count();
    Ok(correct as f64 / n as f64)
}

const BALKANS: &[&str] = &[
    "albanian",
    "bulgarian",
    "greek",
    "macedonian",
    "rumanian",
    "romanian",
    "serbo-croatian",
    "serbian-croatian",
    "romani",
];

const BALTIC: &[&str] = &[
    "latvian",
    "lithuanian",
    "german",
    "belorussian",
    "belarusian",
    "norwegian",
    "old prussian",
    "polish",
    "russian",
    "ukrainian",
];

fn normalize_name(name: &str) -> String {
    let base = match name.find('(') {
        Some(i) => &name[..i],
        None => name,
    };
    base.trim().to_lowercase()
}

/// Gold IE areal clustering over `names`: the Balkans (id 0), the Baltic
/// (id 1), everything else a singleton. A language on both lists goes to
/// the Balkans. Names match case-insensitively, ignoring parentheticals
/// such as "Greek (Modern)".
pub fn gold_ie_areas<S: AsRef<str>>(names: &[S]) -> Clustering {
    let mut next = 2;
    let labels = names
        .iter()
        .map(|s| {
            let key = normalize_name(s.as_ref());
            if BALKANS.contains(&key.as_str()) {
                0
            } else if BALTIC.contains(&key.as_str()) {
                1
            } else {
                next += 1;
                next - 1
            }
        })
        .collect();
    Clustering::new(labels)
}
