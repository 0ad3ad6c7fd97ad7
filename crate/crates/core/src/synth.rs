//! Forward simulation of the generative model and exact posterior
//! enumeration for tiny instances.
//!
//! Generation follows the model top-down: areas by Pitman-Yor seating with
//! centers uniform on the globe (or planted centers), locations uniform in
//! each area's ball, a genealogy from the n-coalescent with jump-to-
//! stationary mutation, `π_f ∼ Beta(1,1)` (or planted), `Z ∼ Bernoulli(π_f)`,
//! values from the indicated source, and finally i.i.d. masking.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Exp1};
use serde::{Deserialize, Serialize};

use crate::areal::{center_feasible, sample_py_partition, CenterPrior, PyConfig};
use crate::coalescent::{sample_prior_tree, to_newick, CoalTree, MutationModel};
use crate::data::{Dataset, FeatureSpec, Language, ObservationMatrix, Value};
use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::sampler::{GeneticSpec, ModelConfig, ModelState, SnapshotTable, SourcePolicy, StateSnapshot};

/// Largest `(Z, a)` state space `enumerate_posterior` will visit.
pub const MAX_ENUMERATION_STATES: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_languages: usize,
    pub n_features: usize,
    pub arity: usize,
    /// Seating hyperparameters and the area radius.
    pub py: PyConfig,
    pub mutation_rate: f64,
    pub missing_rate: f64,
    /// Fixed area centers; languages are dealt to them round-robin.
    pub planted_centers: Option<Vec<GeoPoint>>,
    /// Fixed per-feature areal probabilities.
    pub planted_pi: Option<Vec<f64>>,
    /// Number of genera / families, cut from the top of the genealogy.
    pub n_genera: usize,
    pub n_families: usize,
    /// When set, geography follows genealogy: each genus is placed in one
    /// area (genus `g` in area `g mod K`) around a homeland drawn within
    /// `R − spread` of the area center, and its languages lie within
    /// `spread` km of the homeland.
    pub genus_spread_km: Option<f64>,
}

impl SynthSpec {
    pub fn new(n_languages: usize, n_features: usize) -> Self {
        Self {
            n_languages,
            n_features,
            arity: 2,
            py: PyConfig::default(),
            mutation_rate: 1.0,
            missing_rate: 0.0,
            planted_centers: None,
            planted_pi: None,
            n_genera: (n_languages / 3).max(1),
            n_families: (n_languages / 12).max(1),
            genus_spread_km: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_languages < 2 || self.n_features == 0 {
            return Err(Error::Argument(
                "synthetic data needs at least 2 languages and 1 feature".into(),
            ));
        }
        if self.arity < 2 || self.arity > usize::from(Value::MAX) {
            return Err(Error::Argument(format!("bad arity {}", self.arity)));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Argument("missing rate must lie in [0, 1)".into()));
        }
        if !(1..=self.n_languages).contains(&self.n_genera)
            || !(1..=self.n_languages).contains(&self.n_families)
        {
            return Err(Error::Argument("group counts must lie in [1, N]".into()));
        }
        if let Some(pi) = &self.planted_pi {
            if pi.len() != self.n_features || pi.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Argument("planted π must give one probability per feature".into()));
            }
        }
        if let Some(s) = self.genus_spread_km {
            if !(s > 0.0 && s < self.py.radius_km) {
                return Err(Error::Argument(format!(
                    "genus spread must lie in (0, R), got {s} km"
                )));
            }
        }
        if matches!(&self.planted_centers, Some(c) if c.is_empty()) {
            return Err(Error::Argument("planted centers are empty".into()));
        }
        self.py.validate()
    }
}

/// Everything the generator drew, before masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    /// Row-major `N × F`; true = areal.
    pub z: Vec<bool>,
    pub values: Vec<Value>,
    pub areas: Vec<usize>,
    pub centers: Vec<GeoPoint>,
    pub pi: Vec<f64>,
    /// `phi[k][f]` is area `k`'s value distribution for feature `f`.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub tree: CoalTree,
    pub newick: String,
}

impl Truth {
    pub fn is_areal(&self, n: usize, f: usize) -> bool {
        self.z[n * self.pi.len() + f]
    }

    pub fn value(&self, n: usize, f: usize) -> Value {
        self.values[n * self.pi.len() + f]
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Labels each leaf with the clade it falls in after removing the `k − 1`
/// oldest merges. Clades are numbered by their smallest leaf.
pub fn cut_tree(tree: &CoalTree, k: usize) -> Vec<usize> {
    let order = tree.merge_order();
    let removed: Vec<usize> = order[order.len() + 1 - k.max(1)..].to_vec();
    let n = tree.n_leaves();
    let mut clade_of = vec![usize::MAX; n];
    let mut next = 0;
    for leaf in 0..n {
        if clade_of[leaf] != usize::MAX {
            continue;
        }
        let mut top = leaf;
        while let Some(p) = tree.node(top).parent {
            if removed.contains(&p) {
                break;
            }
            top = p;
        }
        for m in tree.leaves_under(top) {
            clade_of[m] = next;
        }
        next += 1;
    }
    clade_of
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Value {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return v as Value;
        }
    }
    (p.len() - 1) as Value
}

pub fn generate_dataset(spec: &SynthSpec, seed: u64) -> Result<(Dataset, Truth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, nf, a) = (spec.n_languages, spec.n_features, spec.arity);
    let r = spec.py.radius_km;

    let (areas, centers) = match &spec.planted_centers {
        Some(c) => ((0..n).map(|i| i % c.len()).collect::<Vec<_>>(), c.clone()),
        None => {
            let labels = sample_py_partition(n, spec.py.alpha, spec.py.discount, &mut rng);
            let k = labels.iter().max().map_or(0, |m| m + 1);
            let centers = (0..k).map(|_| geo::sample_uniform_globe(&mut rng)).collect();
            (labels, centers)
        }
    };
    let (tree, areas, locations) = match spec.genus_spread_km {
        None => {
            let locations: Vec<GeoPoint> = areas
                .iter()
                .map(|&k| geo::sample_uniform_ball(centers[k], r, &mut rng))
                .collect::<Result<_>>()?;
            (sample_prior_tree(n, &mut rng)?, areas, locations)
        }
        Some(spread) => {
            let tree = sample_prior_tree(n, &mut rng)?;
            let genus = cut_tree(&tree, spec.n_genera);
            let areas: Vec<usize> = genus.iter().map(|g| g % centers.len()).collect();
            let homelands: Vec<GeoPoint> = (0..spec.n_genera)
                .map(|g| geo::sample_uniform_ball(centers[g % centers.len()], r - spread, &mut rng))
                .collect::<Result<_>>()?;
            let locations: Vec<GeoPoint> = genus
                .iter()
                .map(|&g| geo::sample_uniform_ball(homelands[g], spread, &mut rng))
                .collect::<Result<_>>()?;
            (tree, areas, locations)
        }
    };
    let mutation = MutationModel::uniform(spec.mutation_rate, &vec![a; nf])?;
    let pi: Vec<f64> = match &spec.planted_pi {
        Some(p) => p.clone(),
        None => {
            let beta = Beta::new(1.0, 1.0).expect("valid shape");
            (0..nf).map(|_| beta.sample(&mut rng)).collect()
        }
    };
    // symmetric Dirichlet(1) as normalized unit exponentials
    let dirichlet = |rng: &mut ChaCha8Rng| {
        let g: Vec<f64> = (0..a).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let phi: Vec<Vec<Vec<f64>>> = (0..centers.len())
        .map(|_| (0..nf).map(|_| dirichlet(&mut rng)).collect())
        .collect();

    // genetic values: root from the stationary law, then down the branches
    let mut node_values = vec![vec![0 as Value; nf]; tree.n_nodes()];
    let root = tree.root();
    for f in 0..nf {
        node_values[root][f] = sample_categorical(&mutation.stationary[f], &mut rng);
    }
    for u in (0..tree.n_nodes()).rev() {
        if let Some(children) = tree.node(u).children {
            for c in children {
                let dt = tree.branch_length(c);
                for f in 0..nf {
                    let row = mutation.transition(f, dt)?;
                    let parent = usize::from(node_values[u][f]);
                    node_values[c][f] = sample_categorical(&row[parent * a..(parent + 1) * a], &mut rng);
                }
            }
        }
    }

    let mut z = vec![false; n * nf];
    let mut values = vec![0 as Value; n * nf];
    for i in 0..n {
        for f in 0..nf {
            let areal = rng.random::<f64>() < pi[f];
            z[i * nf + f] = areal;
            values[i * nf + f] = if areal {
                sample_categorical(&phi[areas[i]][f], &mut rng)
            } else {
                node_values[i][f]
            };
        }
    }
    let mut obs = ObservationMatrix::new(n, nf);
    for i in 0..n {
        for f in 0..nf {
            if rng.random::<f64>() >= spec.missing_rate {
                obs.set(i, f, Some(values[i * nf + f]));
            }
        }
    }

    let genus = cut_tree(&tree, spec.n_genera);
    let family = cut_tree(&tree, spec.n_families);
    let languages = (0..n)
        .map(|i| Language {
            id: i as u32,
            name: format!("S{i}"),
            location: locations[i],
            genus: format!("G{}", genus[i]),
            family: format!("F{}", family[i]),
        })
        .collect();
    let features = (0..nf)
        .map(|f| FeatureSpec {
            id: f as u32,
            name: format!("feature{f}"),
            category: format!("C{}", f % 4),
            arity: a,
        })
        .collect();
    let data = Dataset::new(languages, features, obs)?;
    let names: Vec<&str> = data.languages.iter().map(|l| l.name.as_str()).collect();
    let newick = to_newick(&tree, &names);
    Ok((
        data,
        Truth {
            z,
            values,
            areas,
            centers,
            pi,
            phi,
            tree,
            newick,
        },
    ))
}

/// One `(Z, a)` configuration with its exact posterior probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactState {
    pub z: Vec<Option<bool>>,
    /// Canonical labels by first appearance.
    pub partition: Vec<usize>,
    pub log_joint: f64,
    pub prob: f64,
}

fn bell(n: usize) -> u128 {
    // Bell triangle
    let mut row = vec![1u128];
    for _ in 1..n.max(1) {
        let mut next = vec![*row.last().expect("nonempty")];
        for &x in &row {
            let v = next.last().expect("nonempty") + x;
            next.push(v);
        }
        row = next;
    }
    if n == 0 {
        1
    } else {
        *row.last().expect("nonempty")
    }
}

/// All set partitions of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = if prefix.is_empty() { 0 } else { max + 1 };
        for l in 0..=next {
            prefix.push(l);
            rec(prefix, max.max(l), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), 0, n, &mut out);
    out
}

/// Exact posterior over `(Z, a)` with centers restricted to a finite grid,
/// scored by the sampler's own collapsed joint. Requires a grid center
/// prior and a fixed grouping.
pub fn enumerate_posterior(data: &Dataset, cfg: &ModelConfig) -> Result<Vec<ExactState>> {
    let CenterPrior::Grid(grid) = &cfg.py.center_prior else {
        return Err(Error::Argument("enumeration needs a grid center prior".into()));
    };
    if !matches!(cfg.genetic, GeneticSpec::Fixed(_)) {
        return Err(Error::Argument("enumeration needs a fixed grouping".into()));
    }
    let n = data.n_languages();
    let nf = data.n_features();
    let cells: Vec<usize> = (0..n * nf)
        .filter(|&i| data.observations.is_known(i / nf, i % nf))
        .collect();
    let z_free = cfg.sources == SourcePolicy::Sampled;
    let z_configs: u128 = if z_free {
        1u128.checked_shl(cells.len() as u32).unwrap_or(u128::MAX)
    } else {
        1
    };
    let size = bell(n).saturating_mul(z_configs);
    if size > MAX_ENUMERATION_STATES {
        return Err(Error::StateSpaceOverflow {
            size,
            limit: MAX_ENUMERATION_STATES,
        });
    }
    let locations: Vec<GeoPoint> = data.languages.iter().map(|l| l.location).collect();
    let mut states = Vec::new();
    for partition in set_partitions(n) {
        let k = partition.iter().max().map_or(0, |m| m + 1);
        let mut tables = Vec::with_capacity(k);
        for b in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| partition[i] == b).collect();
            match grid
                .iter()
                .find(|&&g| center_feasible(&members, &locations, g, cfg.py.radius_km))
            {
                Some(&center) => tables.push(SnapshotTable { center, members }),
                None => break,
            }
        }
        if tables.len() < k {
            continue;
        }
        for mask in 0..z_configs as u64 {
            let mut z = vec![None; n * nf];
            for (bit, &i) in cells.iter().enumerate() {
                z[i] = Some(match cfg.sources {
                    SourcePolicy::Sampled => mask >> bit & 1 == 1,
                    SourcePolicy::AllAreal => true,
                    SourcePolicy::AllGenetic => false,
                });
            }
            let snap = StateSnapshot {
                z: z.clone(),
                tables: tables.clone(),
                tree: None,
                log_prob: 0.0,
            };
            let state = ModelState::from_snapshot(data, cfg, &snap, ChaCha8Rng::seed_from_u64(0))?;
            states.push(ExactState {
                z,
                partition: partition.clone(),
                log_joint: state.joint_log_prob(),
                prob: 0.0,
            });
        }
    }
    let max = states
        .iter()
        .map(|s| s.log_joint)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = states.iter().map(|s| (s.log_joint - max).exp()).sum();
    for s in &mut states {
        s.prob = (s.log_joint - max).exp() / total;
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalescent::FixedGrouping;
    use crate::sampler::tests::dataset;

    #[test]
    fn bell_numbers_match_enumeration() {
        for n in 1..=7 {
            assert_eq!(bell(n), set_partitions(n).len() as u128, "n={n}");
        }
        assert_eq!(bell(0), 1);
    }

    #[test]
    fn generated_languages_lie_in_their_areas() {
        let mut spec = SynthSpec::new(30, 5);
        spec.py.radius_km = 800.0;
        spec.missing_rate = 0.3;
        let (d, t) = generate_dataset(&spec, 7).unwrap();
        d.validate().unwrap();
        assert!(t.tree.is_valid());
        for (i, l) in d.languages.iter().enumerate() {
            assert!(geo::geodesic_km(l.location, t.centers[t.areas[i]]) <= 800.0 + 1e-9);
            for f in 0..5 {
                if let Some(v) = d.observations.get(i, f) {
                    assert_eq!(v, t.value(i, f));
                }
            }
        }
        assert_eq!(generate_dataset(&spec, 7).unwrap().1, t);
    }

    #[test]
    fn genus_clustered_geography() {
        let mut spec = SynthSpec::new(36, 4);
        spec.py.radius_km = 750.0;
        spec.genus_spread_km = Some(150.0);
        spec.planted_centers = Some(vec![
            GeoPoint::new(0.0, 0.0).unwrap(),
            GeoPoint::new(0.0, 20.0).unwrap(),
        ]);
        let (d, t) = generate_dataset(&spec, 3).unwrap();
        for (i, a) in d.languages.iter().enumerate() {
            assert!(geo::geodesic_km(a.location, t.centers[t.areas[i]]) <= 750.0 + 1e-9);
            for (j, b) in d.languages.iter().enumerate() {
                if a.genus == b.genus {
                    assert_eq!(t.areas[i], t.areas[j]);
                    assert!(geo::geodesic_km(a.location, b.location) <= 300.0 + 1e-9);
                }
            }
        }
        spec.genus_spread_km = Some(750.0);
        assert!(matches!(generate_dataset(&spec, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn degenerate_options() {
        let mut spec = SynthSpec::new(12, 4);
        spec.planted_pi = Some(vec![0.0; 4]);
        let (d, t) = generate_dataset(&spec, 1).unwrap();
        assert!(t.z.iter().all(|&z| !z));
        assert_eq!(d.observations.known_count(), 12 * 4);
        let centers = vec![GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(50.0, 50.0).unwrap()];
        spec.planted_centers = Some(centers);
        let (_, t) = generate_dataset(&spec, 1).unwrap();
        assert_eq!(t.areas, (0..12).map(|i| i % 2).collect::<Vec<_>>());
    }

    #[test]
    fn cut_tree_makes_k_clades() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = sample_prior_tree(10, &mut rng).unwrap();
        for k in 1..=10 {
            let labels = cut_tree(&tree, k);
            assert_eq!(labels.iter().max().unwrap() + 1, k);
        }
    }

    fn grid_cfg(d: &Dataset, grid: Vec<GeoPoint>, labels: &[&str]) -> ModelConfig {
        let py = PyConfig::default().with_grid(grid).unwrap();
        let g = FixedGrouping::from_labels(labels).unwrap();
        ModelConfig::new(d, py, GeneticSpec::Fixed(g)).unwrap()
    }

    #[test]
    fn one_cell_is_symmetric() {
        let d = dataset(&[(0.0, 0.0)], &[&[Some(1)]], &[2]);
        let cfg = grid_cfg(&d, vec![GeoPoint::new(0.0, 0.0).unwrap()], &["a"]);
        let post = enumerate_posterior(&d, &cfg).unwrap();
        assert_eq!(post.len(), 2);
        let p1: f64 = post.iter().filter(|s| s.z[0] == Some(true)).map(|s| s.prob).sum();
        assert!((p1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_point_grid_matches_hand_calculation() {
        // Two languages at one spot, same genus, one binary feature, values
        // (1, 1). With one grid point covering both, the location factor is
        // identical for every partition with the same number of members, so
        // states differ only through the PY prior and the collapsed pools.
        let d = dataset(&[(0.0, 0.0), (0.0, 0.0)], &[&[Some(1)], &[Some(1)]], &[2]);
        let cfg = grid_cfg(&d, vec![GeoPoint::new(0.0, 0.0).unwrap()], &["g", "g"]);
        let post = enumerate_posterior(&d, &cfg).unwrap();
        let total: f64 = post.iter().map(|s| s.prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(post.len(), 2 * 4);
        let (alpha, disc) = (1.0, 0.5);
        // EPPF: together (1 - d)/(α + 1); apart (α + d)/(α + 1)
        let eppf = |together: bool| if together { (1.0 - disc) / (alpha + 1.0) } else { (alpha + disc) / (alpha + 1.0) };
        // per-table location factor with the single grid point: A_cap^{-|S|},
        // so both partitions contribute A_cap^{-2}; omit it
        let src = |c0: u32, c1: u32| {
            // c0! c1! / (c0 + c1 + 1)!
            let f = |k: u32| (1..=k).map(f64::from).product::<f64>();
            f(c0) * f(c1) / f(c0 + c1 + 1)
        };
        // pool marginal of m ones in a binary Dirichlet(1): 1/(m+1)
        let pool = |m: u32| 1.0 / (f64::from(m) + 1.0);
        let mut want = Vec::new();
        for together in [true, false] {
            for mask in 0..4u32 {
                let areal = [mask & 1 == 1, mask & 2 == 2];
                let na = areal.iter().filter(|&&x| x).count() as u32;
                let ng = 2 - na;
                let areal_lik = if together {
                    pool(na)
                } else {
                    areal.iter().map(|&x| if x { pool(1) } else { 1.0 }).product()
                };
                want.push(eppf(together) * src(ng, na) * areal_lik * pool(ng));
            }
        }
        let z: f64 = want.iter().sum();
        for s in &post {
            let together = s.partition == vec![0, 0];
            let mask = u32::from(s.z[0] == Some(true)) | (u32::from(s.z[1] == Some(true)) << 1);
            let idx = usize::from(!together) * 4 + mask as usize;
            assert!((s.prob - want[idx] / z).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        let rows: Vec<Vec<Option<Value>>> = (0..8).map(|_| vec![Some(1); 3]).collect();
        let rows: Vec<&[Option<Value>]> = rows.iter().map(|r| r.as_slice()).collect();
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (0.0, i as f64 * 0.1)).collect();
        let d = dataset(&pts, &rows, &[2, 2, 2]);
        let cfg = grid_cfg(&d, vec![GeoPoint::new(0.0, 0.0).unwrap()], &["a"; 8]);
        assert!(matches!(
            enumerate_posterior(&d, &cfg),
            Err(Error::StateSpaceOverflow { .. })
        ));
    }
}
