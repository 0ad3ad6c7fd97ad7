//! Greedy agglomerative tree construction with rate-1 pairwise merge priors.
//!
//! Starting from the leaves, every step scores each pair of active subtrees
//! by `log Exp(1) density at δ` plus the log-likelihood gain of merging the
//! pair at time `t_last - δ`, where `t_last` is the time of the previous
//! merge. `δ` is optimized per pair by golden-section search on
//! `(0, 10 / rate]`; the best pair is merged. Ties go to the pair with the
//! smallest (min-leaf, min-leaf) indices; scores within a relative 1e-7 of
//! the best count as tied.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{CoalTree, MutationModel};
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};

const GOLDEN_ITERS: usize = 48;
const RATIO_BLOCK: usize = 16;
const MIN_DELTA_FRACTION: f64 = 1e-10;
const FLOOR_TOLERANCE: f64 = 1e-6;
const TIE_TOLERANCE: f64 = 1e-7;

struct Subtree {
    node: usize,
    time: f64,
    min_leaf: usize,
    /// Normalized upward message per feature.
    beta: Vec<Vec<f64>>,
    /// `<pi, beta>` per feature.
    root_mass: Vec<f64>,
    /// Accumulated log normalizers.
    log_scale: Vec<f64>,
}

fn merged_messages(
    a: &Subtree,
    b: &Subtree,
    time: f64,
    model: &MutationModel,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let stay_a = model.stay(a.time - time);
    let stay_b = model.stay(b.time - time);
    let mut betas = Vec::with_capacity(a.beta.len());
    let mut scales = Vec::with_capacity(a.beta.len());
    for f in 0..a.beta.len() {
        let (ma, mb) = (a.root_mass[f], b.root_mass[f]);
        let mut u: Vec<f64> = a.beta[f]
            .iter()
            .zip(&b.beta[f])
            .map(|(&x, &y)| (stay_a * x + (1.0 - stay_a) * ma) * (stay_b * y + (1.0 - stay_b) * mb))
            .collect();
        let s: f64 = u.iter().sum();
        u.iter_mut().for_each(|v| *v /= s);
        scales.push(a.log_scale[f] + b.log_scale[f] + s.ln());
        betas.push(u);
    }
    (betas, scales)
}

fn merge_gain(a: &Subtree, b: &Subtree, time: f64, model: &MutationModel) -> f64 {
    let stay_a = model.stay(a.time - time);
    let stay_b = model.stay(b.time - time);
    // Per-feature ratios are multiplied in blocks and logged once per block;
    // a block whose product leaves the safe range is logged term by term.
    let mut gain = 0.0;
    let mut ratios = [0.0f64; RATIO_BLOCK];
    let n_features = a.beta.len();
    let mut start = 0;
    while start < n_features {
        let end = (start + RATIO_BLOCK).min(n_features);
        let mut prod = 1.0;
        for f in start..end {
            let pi = &model.stationary[f];
            let (ma, mb) = (a.root_mass[f], b.root_mass[f]);
            let mut inner = 0.0;
            for i in 0..pi.len() {
                inner += pi[i]
                    * (stay_a * a.beta[f][i] + (1.0 - stay_a) * ma)
                    * (stay_b * b.beta[f][i] + (1.0 - stay_b) * mb);
            }
            let r = inner / (ma * mb);
            ratios[f - start] = r;
            prod *= r;
        }
        if prod > 1e-250 && prod < 1e250 {
            gain += prod.ln();
        } else {
            gain += ratios[..end - start].iter().map(|r| r.ln()).sum::<f64>();
        }
        start = end;
    }
    gain
}

/// Index of the first score within `TIE_TOLERANCE` of the maximum, so that
/// mathematically tied pairs resolve by pair order, not rounding noise.
fn first_best(scores: impl Iterator<Item = f64> + Clone) -> usize {
    let max = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    scores
        .clone()
        .position(|s| s >= max - TIE_TOLERANCE * max.abs().max(1.0))
        .unwrap_or(0)
}

/// Maximizes `f` on `(lo, hi]` by golden-section search.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    // the interval is closed on the right
    let fh = f(hi);
    if fh > best.1 {
        best = (hi, fh);
    }
    best
}

/// Builds a genealogy over all languages using only cells where
/// `include(language, feature)` holds.
pub fn greedy_rate1_build<F>(
    obs: &ObservationMatrix,
    model: &MutationModel,
    include: F,
) -> Result<CoalTree>
where
    F: Fn(usize, usize) -> bool,
{
    let n = obs.n_languages();
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 languages, got {n}")));
    }
    if model.n_features() != obs.n_features() {
        return Err(Error::Argument("mutation model and data disagree on features".into()));
    }
    let mut active: Vec<Subtree> = (0..n)
        .map(|leaf| {
            let beta: Vec<Vec<f64>> = (0..obs.n_features())
                .map(|f| {
                    let a = model.stationary[f].len();
                    match obs.get(leaf, f).filter(|_| include(leaf, f)) {
                        Some(v) => {
                            let mut e = vec![0.0; a];
                            e[usize::from(v)] = 1.0;
                            e
                        }
                        None => vec![1.0; a],
                    }
                })
                .collect();
            let root_mass = beta
                .iter()
                .zip(&model.stationary)
                .map(|(b, pi)| b.iter().zip(pi).map(|(x, p)| x * p).sum())
                .collect();
            Subtree {
                node: leaf,
                time: 0.0,
                min_leaf: leaf,
                beta,
                root_mass,
                log_scale: vec![0.0; obs.n_features()],
            }
        })
        .collect();

    let horizon = 10.0 / model.rate;
    // smallest δ the search resolves; used when a pair's optimum lies above
    // the window
    let min_delta = horizon * MIN_DELTA_FRACTION;
    // Per pair of nodes: the optimum merge time τ* of `τ + gain(τ)` searched
    // on [m - horizon, m) with m the older of the two subtree times, and
    // whether it sits on the lower edge of that range. The step objective is
    // `τ + gain(τ) - t_last` on [t_last - horizon, t_last), whose maximizer
    // (for a unimodal objective) is τ* clamped into the window, so only the
    // clamped value has to be re-scored as `t_last` moves.
    let mut optimum: HashMap<(usize, usize), (f64, bool)> = HashMap::new();
    let mut t_last = 0.0;
    let mut merges = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        active.sort_by_key(|s| s.min_leaf);
        let pairs: Vec<(usize, usize)> = (0..active.len())
            .flat_map(|i| (i + 1..active.len()).map(move |j| (i, j)))
            .collect();
        let key = |i: usize, j: usize| (active[i].node, active[j].node);
        let fresh: Vec<((usize, usize), (f64, bool))> = pairs
            .par_iter()
            .filter(|&&(i, j)| !optimum.contains_key(&key(i, j)))
            .map(|&(i, j)| {
                let (a, b) = (&active[i], &active[j]);
                let m = a.time.min(b.time);
                let (d, _) = golden_max(|d| -d + merge_gain(a, b, m - d, model), 0.0, horizon);
                (key(i, j), (m - d, d >= horizon * (1.0 - FLOOR_TOLERANCE)))
            })
            .collect();
        optimum.extend(fresh);
        let scored: Vec<(f64, f64)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (&active[i], &active[j]);
                let (tau, at_floor) = optimum[&key(i, j)];
                if at_floor && t_last < a.time.min(b.time) {
                    // the optimum may lie below the cached range
                    golden_max(|d| -d + merge_gain(a, b, t_last - d, model), 0.0, horizon)
                } else {
                    let d = (t_last - tau).clamp(min_delta, horizon);
                    (d, -d + merge_gain(a, b, t_last - d, model))
                }
            })
            .collect();
        let best = first_best(scored.iter().map(|s| s.1));
        let (i, j) = pairs[best];
        let time = t_last - scored[best].0;
        let (beta, log_scale) = merged_messages(&active[i], &active[j], time, model);
        let root_mass = beta
            .iter()
            .zip(&model.stationary)
            .map(|(b, pi)| b.iter().zip(pi).map(|(x, p)| x * p).sum())
            .collect();
        let node = n + merges.len();
        merges.push((active[i].node, active[j].node, time));
        let (gone_a, gone_b) = (active[i].node, active[j].node);
        optimum.retain(|&(x, y), _| x != gone_a && x != gone_b && y != gone_a && y != gone_b);
        let merged = Subtree {
            node,
            time,
            min_leaf: active[i].min_leaf.min(active[j].min_leaf),
            beta,
            root_mass,
            log_scale,
        };
        active.swap_remove(j);
        active[i] = merged;
        t_last = time;
    }
    CoalTree::from_merges(n, &merges)
}
