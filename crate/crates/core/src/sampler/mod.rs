//! Collapsed Gibbs / Metropolis-Hastings inference.
//!
//! The state holds the source indicator `Z` of every observed cell (areal or
//! genetic), the area partition with one center per table, and the genetic
//! side. The mixing weights `π_f`, area parameters and genetic parameters
//! are integrated out, so every conditional is a ratio of count-based
//! predictives. One sweep resamples every `Z` cell, then every language's
//! area, then proposes one center move per table.

mod chain;
mod genetic;

pub use chain::{run_chain, write_trace, ChainOutput, SampleRecord, SamplerConfig};
pub use genetic::{Genetic, GeneticSpec};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::areal::{
    center_feasible, draw_new_center, location_log_prob, py_partition_log_prob,
    seating_log_weights, tables_log_marginal, AreaState, CenterPrior, PyConfig, Seat,
};
use crate::coalescent::{CoalTree, MutationModel};
use crate::data::{Dataset, Value};
use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::pool::FeatureLayout;

/// Which sources a cell may come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SourcePolicy {
    /// `Z` is sampled with `π_f` collapsed.
    #[default]
    Sampled,
    /// Every cell is areal (flat Pitman-Yor clustering with geography).
    AllAreal,
    /// Every cell is genetic (the no-contact baseline).
    AllGenetic,
}

/// Model hyperparameters shared by every chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub py: PyConfig,
    pub mutation: MutationModel,
    pub genetic: GeneticSpec,
    pub sources: SourcePolicy,
}

impl ModelConfig {
    /// Default Pitman-Yor settings, uniform rate-1 mutation.
    pub fn new(data: &Dataset, py: PyConfig, genetic: GeneticSpec) -> Result<Self> {
        let arities: Vec<usize> = data.features.iter().map(|f| f.arity).collect();
        Ok(Self {
            py,
            mutation: MutationModel::uniform(1.0, &arities)?,
            genetic,
            sources: SourcePolicy::Sampled,
        })
    }

    pub fn is_full(&self) -> bool {
        matches!(self.genetic, GeneticSpec::Tree)
    }
}

/// One table of a serialized state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotTable {
    pub center: GeoPoint,
    pub members: Vec<usize>,
}

/// Serializable configuration used for warm starts and MAP output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// Row-major `N × F`; `None` on unobserved cells, `Some(true)` = areal.
    pub z: Vec<Option<bool>>,
    pub tables: Vec<SnapshotTable>,
    pub tree: Option<CoalTree>,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct ModelState {
    z: Vec<Option<bool>>,
    /// Per feature: `[genetic count, areal count]`.
    source_counts: Vec<[u32; 2]>,
    areas: AreaState,
    genetic: Genetic,
    cfg: ModelConfig,
    layout: FeatureLayout,
    locations: Vec<GeoPoint>,
    observed: Vec<(usize, usize)>,
    rng: ChaCha8Rng,
}

fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    debug_assert!(max.is_finite(), "no feasible option");
    let w: Vec<f64> = log_w.iter().map(|&x| (x - max).exp()).collect();
    WeightedIndex::new(&w)
        .expect("at least one positive weight")
        .sample(rng)
}

impl ModelState {
    /// Random initialization: singleton tables, fair-coin `Z`, greedy tree.
    pub fn init(data: &Dataset, cfg: &ModelConfig, mut rng: ChaCha8Rng) -> Result<Self> {
        let n_lang = data.n_languages();
        let n_feat = data.n_features();
        let z = (0..n_lang * n_feat)
            .map(|i| {
                data.observations.get(i / n_feat, i % n_feat).map(|_| match cfg.sources {
                    SourcePolicy::Sampled => rng.random_bool(0.5),
                    SourcePolicy::AllAreal => true,
                    SourcePolicy::AllGenetic => false,
                })
            })
            .collect();
        let mut tables = Vec::with_capacity(n_lang);
        for lang in &data.languages {
            let center = draw_new_center(lang.location, &cfg.py, &mut rng)?;
            tables.push((center, vec![tables.len()]));
        }
        let tables = tables
            .into_iter()
            .map(|(center, members)| SnapshotTable { center, members })
            .collect();
        Self::assemble(data, cfg, z, tables, None, rng)
    }

    /// Rebuilds a state from a snapshot (warm start).
    pub fn from_snapshot(
        data: &Dataset,
        cfg: &ModelConfig,
        snap: &StateSnapshot,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let tree = if cfg.is_full() { snap.tree.clone() } else { None };
        Self::assemble(data, cfg, snap.z.clone(), snap.tables.clone(), tree, rng)
    }

    fn assemble(
        data: &Dataset,
        cfg: &ModelConfig,
        z: Vec<Option<bool>>,
        tables: Vec<SnapshotTable>,
        tree: Option<CoalTree>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        cfg.py.validate()?;
        let n_lang = data.n_languages();
        let n_feat = data.n_features();
        if n_lang == 0 {
            return Err(Error::EmptyDataset {
                languages: 0,
                features: n_feat,
            });
        }
        if cfg.mutation.n_features() != n_feat {
            return Err(Error::Argument("mutation model and data disagree on features".into()));
        }
        if let GeneticSpec::Fixed(g) = &cfg.genetic {
            if g.n_languages() != n_lang {
                return Err(Error::Argument("grouping and data disagree on languages".into()));
            }
        }
        if cfg.is_full() && n_lang < 2 {
            return Err(Error::Argument("full mode needs at least 2 languages".into()));
        }
        if z.len() != n_lang * n_feat {
            return Err(Error::Validation("source indicator shape mismatch".into()));
        }
        let layout = FeatureLayout::new(data.features.iter().map(|f| f.arity).collect());
        let locations: Vec<GeoPoint> = data.languages.iter().map(|l| l.location).collect();
        if let CenterPrior::Grid(grid) = &cfg.py.center_prior {
            for (n, &loc) in locations.iter().enumerate() {
                if !grid.iter().any(|&g| geo::geodesic_km(loc, g) <= cfg.py.radius_km) {
                    return Err(Error::Argument(format!(
                        "language {n} is not covered by any grid center"
                    )));
                }
            }
        }
        let mut observed = Vec::new();
        let mut source_counts = vec![[0u32; 2]; n_feat];
        for n in 0..n_lang {
            for f in 0..n_feat {
                match (data.observations.is_known(n, f), z[n * n_feat + f]) {
                    (true, Some(s)) => {
                        observed.push((n, f));
                        source_counts[f][usize::from(s)] += 1;
                    }
                    (false, None) => {}
                    _ => {
                        return Err(Error::Validation(format!(
                            "source indicator at ({n}, {f}) disagrees with observations"
                        )))
                    }
                }
            }
        }
        let is_areal = |n: usize, f: usize| z[n * n_feat + f] == Some(true);
        let mut areas = AreaState::new(n_lang);
        for t in &tables {
            let mut k = None;
            for &m in &t.members {
                if m >= n_lang {
                    return Err(Error::Validation(format!("table member {m} out of range")));
                }
                let cells: Vec<(usize, Value)> = (0..n_feat)
                    .filter(|&f| is_areal(m, f))
                    .filter_map(|f| data.observations.get(m, f).map(|v| (f, v)))
                    .collect();
                let seat = match k {
                    None => Seat::New(t.center),
                    Some(k) => Seat::Existing(k),
                };
                k = Some(areas.assign_language(m, seat, locations[m], &cells, &layout, cfg.py.radius_km)?);
            }
        }
        if !areas.check_structure(&locations, cfg.py.radius_km) {
            return Err(Error::Validation("tables do not cover every language exactly once".into()));
        }
        let genetic = Genetic::build(&cfg.genetic, data, &layout, &cfg.mutation, tree, |n, f| {
            z[n * n_feat + f] == Some(false)
        })?;
        Ok(Self {
            z,
            source_counts,
            areas,
            genetic,
            cfg: cfg.clone(),
            layout,
            locations,
            observed,
            rng,
        })
    }

    pub fn n_languages(&self) -> usize {
        self.locations.len()
    }

    pub fn n_features(&self) -> usize {
        self.layout.n_features()
    }

    /// `Some(true)` if cell `(n, f)` is areal, `Some(false)` if genetic,
    /// `None` if unobserved.
    pub fn source(&self, n: usize, f: usize) -> Option<bool> {
        self.z[n * self.n_features() + f]
    }

    /// `(ΣZ, Σ(1 − Z))` for feature `f`.
    pub fn source_counts(&self, f: usize) -> (u32, u32) {
        (self.source_counts[f][1], self.source_counts[f][0])
    }

    pub fn areas(&self) -> &AreaState {
        &self.areas
    }

    pub fn genetic(&self) -> &Genetic {
        &self.genetic
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn areal_cells(&self, data: &Dataset, n: usize) -> Vec<(usize, Value)> {
        (0..self.n_features())
            .filter(|&f| self.source(n, f) == Some(true))
            .filter_map(|f| data.observations.get(n, f).map(|v| (f, v)))
            .collect()
    }

    /// Predictive of `value` at `(n, f)` from `n`'s area table.
    pub fn areal_predictive(&self, n: usize, f: usize, value: Value) -> f64 {
        let k = self.areas.table_of(n).expect("every language is seated");
        self.areas.table(k).stats().predictive(&self.layout, f, value)
    }

    /// Predictive of `value` at `(n, f)` from the genetic side.
    pub fn genetic_predictive(&self, n: usize, f: usize, value: Value) -> f64 {
        self.genetic.predictive(&self.layout, n, f, value)
    }

    /// Conditional `P(Z_{n,f} = 1 | rest)` with the cell removed from both
    /// sources; the state is left unchanged.
    pub fn z_conditional(&mut self, data: &Dataset, n: usize, f: usize) -> Result<f64> {
        let v = data
            .observations
            .get(n, f)
            .ok_or_else(|| Error::Argument(format!("contract violation: cell ({n}, {f}) is missing")))?;
        let cur = self.source(n, f).expect("observed cells carry a source");
        self.detach(n, f, v, cur);
        let p = self.z_probability(n, f, v);
        self.attach(n, f, v, cur);
        Ok(p)
    }

    fn detach(&mut self, n: usize, f: usize, v: Value, areal: bool) {
        if areal {
            self.areas.remove_cell(n, f, v, &self.layout);
        } else {
            self.genetic.remove(&self.layout, n, f, v);
        }
        self.source_counts[f][usize::from(areal)] -= 1;
    }

    fn attach(&mut self, n: usize, f: usize, v: Value, areal: bool) {
        if areal {
            self.areas.add_cell(n, f, v, &self.layout);
        } else {
            self.genetic.add(&self.layout, n, f, v);
        }
        self.source_counts[f][usize::from(areal)] += 1;
        let i = n * self.n_features() + f;
        self.z[i] = Some(areal);
    }

    fn z_probability(&self, n: usize, f: usize, v: Value) -> f64 {
        let [c0, c1] = self.source_counts[f];
        let w1 = (f64::from(c1) + 1.0) * self.areal_predictive(n, f, v);
        let w0 = (f64::from(c0) + 1.0) * self.genetic_predictive(n, f, v);
        if w1 <= 0.0 {
            0.0
        } else {
            w1 / (w0 + w1)
        }
    }

    /// Gibbs update of one source indicator. Returns the new value.
    pub fn resample_z_cell(&mut self, data: &Dataset, n: usize, f: usize) -> Result<bool> {
        let v = data
            .observations
            .get(n, f)
            .ok_or_else(|| Error::Argument(format!("contract violation: cell ({n}, {f}) is missing")))?;
        let cur = self.source(n, f).expect("observed cells carry a source");
        if self.cfg.sources != SourcePolicy::Sampled {
            return Ok(cur);
        }
        // The genealogy's leaf predictive already ignores the cell's own
        // evidence, so a genetic cell only leaves the tree if it flips.
        let lazy = !cur && self.genetic.predictive_excludes_own_cell();
        if lazy {
            self.source_counts[f][0] -= 1;
        } else {
            self.detach(n, f, v, cur);
        }
        let p = self.z_probability(n, f, v);
        let new = self.rng.random::<f64>() < p;
        if lazy {
            if !new {
                self.source_counts[f][0] += 1;
                return Ok(false);
            }
            self.genetic.remove(&self.layout, n, f, v);
        }
        self.attach(n, f, v, new);
        Ok(new)
    }

    /// Gibbs update of one language's area. Returns its new table index.
    pub fn resample_area(&mut self, data: &Dataset, n: usize) -> Result<usize> {
        let cells = self.areal_cells(data, n);
        self.areas.remove_language(n, &cells, &self.layout)?;
        let loc = self.locations[n];
        let w = seating_log_weights(&self.areas, loc, &cells, &self.cfg.py, &self.layout);
        let mut all = w.existing;
        all.push(w.new_table);
        let choice = sample_log_weights(&all, &mut self.rng);
        let seat = if choice < self.areas.n_tables() {
            Seat::Existing(choice)
        } else {
            Seat::New(draw_new_center(loc, &self.cfg.py, &mut self.rng)?)
        };
        self.areas
            .assign_language(n, seat, loc, &cells, &self.layout, self.cfg.py.radius_km)
    }

    /// Metropolis-Hastings move of table `k`'s center. Under a globe prior
    /// the proposal is a Gaussian random walk in degrees; under a grid prior
    /// it is a uniform grid point. Both are symmetric and the target is flat
    /// on feasible centers, so a proposal is accepted iff every member stays
    /// within the radius.
    pub fn mh_center_move(&mut self, k: usize, sigma_degrees: f64) -> Result<bool> {
        let center = self.areas.table(k).center;
        let proposal = match &self.cfg.py.center_prior {
            CenterPrior::Globe => {
                let normal = Normal::new(0.0, sigma_degrees)
                    .map_err(|e| Error::Argument(format!("bad proposal scale: {e}")))?;
                let lat = center.lat() + normal.sample(&mut self.rng);
                let lon = center.lon() + normal.sample(&mut self.rng);
                if !(-90.0..=90.0).contains(&lat) {
                    return Ok(false);
                }
                GeoPoint::wrapped(lat, lon)?
            }
            CenterPrior::Grid(grid) => *grid.choose(&mut self.rng).expect("grid is nonempty"),
        };
        let members = self.areas.table(k).members();
        if center_feasible(members, &self.locations, proposal, self.cfg.py.radius_km) {
            self.areas.set_center(k, proposal);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// One sweep; returns `(accepted, proposed)` center moves.
    pub fn sweep(&mut self, data: &Dataset, sigma_degrees: f64) -> Result<(usize, usize)> {
        let mut cells = self.observed.clone();
        cells.shuffle(&mut self.rng);
        for (n, f) in cells {
            self.resample_z_cell(data, n, f)?;
        }
        let mut langs: Vec<usize> = (0..self.n_languages()).collect();
        langs.shuffle(&mut self.rng);
        for n in langs {
            self.resample_area(data, n)?;
        }
        let proposed = self.areas.n_tables();
        let mut accepted = 0;
        for k in 0..proposed {
            accepted += usize::from(self.mh_center_move(k, sigma_degrees)?);
        }
        debug_assert!(self.matches_recount(data), "statistics drifted from a full recount");
        Ok((accepted, proposed))
    }

    /// Refits the genealogy on the current genetic cells (full mode only).
    pub fn refit_tree(&mut self, data: &Dataset) -> Result<()> {
        let z = &self.z;
        let nf = self.layout.n_features();
        self.genetic.refit(data, |n, f| z[n * nf + f] == Some(false))
    }

    /// True if every incremental statistic equals a rebuild from `(Z, a, X)`.
    pub fn matches_recount(&self, data: &Dataset) -> bool {
        let nf = self.n_features();
        let mut counts = vec![[0u32; 2]; nf];
        for &(n, f) in &self.observed {
            counts[f][usize::from(self.source(n, f) == Some(true))] += 1;
        }
        counts == self.source_counts
            && self
                .areas
                .stats_match_recount(&self.layout, |n| self.areal_cells(data, n))
            && self.areas.check_structure(&self.locations, self.cfg.py.radius_km)
            && self
                .genetic
                .matches_recount(data, &self.layout, |n, f| self.source(n, f) == Some(false))
    }

    /// Log joint probability of the collapsed state.
    pub fn joint_log_prob(&self) -> f64 {
        let py = &self.cfg.py;
        let mut lp = py_partition_log_prob(&self.areas.sizes(), py.alpha, py.discount)
            + location_log_prob(&self.areas, &self.locations, py)
            + tables_log_marginal(&self.areas, &self.layout)
            + self.genetic.log_lik(&self.layout)
            + self.genetic.log_prior();
        if self.cfg.sources == SourcePolicy::Sampled {
            lp += self
                .source_counts
                .iter()
                .map(|&[c0, c1]| source_log_marginal(c0, c1))
                .sum::<f64>();
        }
        lp
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            z: self.z.clone(),
            tables: self
                .areas
                .tables()
                .iter()
                .map(|t| SnapshotTable {
                    center: t.center,
                    members: t.members().to_vec(),
                })
                .collect(),
            tree: self.genetic.tree().cloned(),
            log_prob: self.joint_log_prob(),
        }
    }
}

/// Beta(1,1)-Bernoulli marginal of `c0` genetic and `c1` areal cells:
/// `c0! c1! / (c0 + c1 + 1)!`.
pub fn source_log_marginal(c0: u32, c1: u32) -> f64 {
    ln_gamma(f64::from(c0) + 1.0) + ln_gamma(f64::from(c1) + 1.0)
        - ln_gamma(f64::from(c0 + c1) + 2.0)
}
