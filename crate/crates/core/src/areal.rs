//! Pitman-Yor partition of languages into geographically anchored areas.
//!
//! Each table carries a center and the collapsed value counts of its members'
//! areal cells (cells whose source indicator is 1). Languages may only sit at
//! tables whose center lies within the configured radius.
//!
//! Location factors: joining an existing table contributes `1 / cap_area(R)`;
//! opening a table contributes the center-marginalized factor, which is
//! `1 / globe_area` under the uniform-globe center prior and
//! `#{grid points covering the language} / (|grid| * cap_area(R))` under a
//! finite grid prior.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Value;
use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::pool::{CountPool, FeatureLayout};

/// Prior over area centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CenterPrior {
    /// Uniform over the sphere.
    Globe,
    /// Uniform over a finite set of candidate centers.
    Grid(Vec<GeoPoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyConfig {
    pub alpha: f64,
    pub discount: f64,
    pub radius_km: f64,
    pub center_prior: CenterPrior,
}

impl PyConfig {
    pub fn new(alpha: f64, discount: f64, radius_km: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            discount,
            radius_km,
            center_prior: CenterPrior::Globe,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_grid(mut self, grid: Vec<GeoPoint>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Argument("center grid is empty".into()));
        }
        self.center_prior = CenterPrior::Grid(grid);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Argument(format!(
                "discount must lie in [0, 1), got {}",
                self.discount
            )));
        }
        if !(self.alpha > -self.discount) {
            return Err(Error::Argument(format!(
                "alpha must exceed -discount, got alpha={} d={}",
                self.alpha, self.discount
            )));
        }
        geo::check_radius(self.radius_km)
    }

    pub fn log_cap_area(&self) -> f64 {
        geo::cap_area_km2(self.radius_km).ln()
    }
}

impl Default for PyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            discount: 0.5,
            radius_km: 1000.0,
            center_prior: CenterPrior::Globe,
        }
    }
}

/// Stable table handle; never reused within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaTable {
    pub id: TableId,
    pub center: GeoPoint,
    members: Vec<usize>,
    stats: CountPool,
}

impl AreaTable {
    /// Sorted member languages.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn stats(&self) -> &CountPool {
        &self.stats
    }
}

/// Where a language is to be seated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seat {
    Existing(usize),
    New(GeoPoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaState {
    tables: Vec<AreaTable>,
    assignment: Vec<Option<usize>>,
    next_id: u64,
}

impl AreaState {
    /// All languages unseated.
    pub fn new(n_languages: usize) -> Self {
        Self {
            tables: Vec::new(),
            assignment: vec![None; n_languages],
            next_id: 0,
        }
    }

    pub fn n_languages(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[AreaTable] {
        &self.tables
    }

    pub fn table(&self, k: usize) -> &AreaTable {
        &self.tables[k]
    }

    pub fn table_of(&self, language: usize) -> Option<usize> {
        self.assignment[language]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tables.iter().map(AreaTable::size).collect()
    }

    /// Cluster label per language, numbered by first appearance. Unseated
    /// languages get `usize::MAX`.
    pub fn partition(&self) -> Vec<usize> {
        let mut relabel = vec![usize::MAX; self.tables.len()];
        let mut next = 0;
        self.assignment
            .iter()
            .map(|a| match a {
                Some(k) => {
                    if relabel[*k] == usize::MAX {
                        relabel[*k] = next;
                        next += 1;
                    }
                    relabel[*k]
                }
                None => usize::MAX,
            })
            .collect()
    }

    /// Seats language `n`. Existing targets must contain `location` within
    /// `radius_km` of their center. Returns the table index.
    pub fn assign_language(
        &mut self,
        n: usize,
        seat: Seat,
        location: GeoPoint,
        areal_cells: &[(usize, Value)],
        layout: &FeatureLayout,
        radius_km: f64,
    ) -> Result<usize> {
        if self.assignment[n].is_some() {
            return Err(Error::Argument(format!(
                "contract violation: language {n} is already seated"
            )));
        }
        let k = match seat {
            Seat::Existing(k) => {
                let table = self.tables.get(k).ok_or_else(|| {
                    Error::Argument(format!("contract violation: no table {k}"))
                })?;
                if geo::geodesic_km(location, table.center) > radius_km {
                    return Err(Error::Argument(format!(
                        "contract violation: language {n} is out of range of table {k}"
                    )));
                }
                let pos = self.tables[k].members.binary_search(&n).unwrap_err();
                self.tables[k].members.insert(pos, n);
                k
            }
            Seat::New(center) => {
                if geo::geodesic_km(location, center) > radius_km {
                    return Err(Error::Argument(format!(
                        "contract violation: new center is out of range of language {n}"
                    )));
                }
                self.tables.push(AreaTable {
                    id: TableId(self.next_id),
                    center,
                    members: vec![n],
                    stats: CountPool::empty(layout),
                });
                self.next_id += 1;
                self.tables.len() - 1
            }
        };
        for &(f, v) in areal_cells {
            self.tables[k].stats.add(layout, f, v);
        }
        self.assignment[n] = Some(k);
        Ok(k)
    }

    /// Unseats language `n`, deleting its table if it becomes empty.
    pub fn remove_language(
        &mut self,
        n: usize,
        areal_cells: &[(usize, Value)],
        layout: &FeatureLayout,
    ) -> Result<()> {
        let k = self.assignment[n].ok_or_else(|| {
            Error::Argument(format!("contract violation: language {n} is not seated"))
        })?;
        let table = &mut self.tables[k];
        let pos = table
            .members
            .binary_search(&n)
            .expect("assignment and member sets agree");
        table.members.remove(pos);
        for &(f, v) in areal_cells {
            table.stats.remove(layout, f, v);
        }
        self.assignment[n] = None;
        if table.members.is_empty() {
            debug_assert!(table.stats.is_empty());
            self.tables.swap_remove(k);
            if k < self.tables.len() {
                for &m in &self.tables[k].members {
                    self.assignment[m] = Some(k);
                }
            }
        }
        Ok(())
    }

    /// Adds one areal cell of a seated language to its table's statistics.
    pub fn add_cell(&mut self, n: usize, feature: usize, value: Value, layout: &FeatureLayout) {
        let k = self.assignment[n].expect("language is seated");
        self.tables[k].stats.add(layout, feature, value);
    }

    pub fn remove_cell(&mut self, n: usize, feature: usize, value: Value, layout: &FeatureLayout) {
        let k = self.assignment[n].expect("language is seated");
        self.tables[k].stats.remove(layout, feature, value);
    }

    pub fn set_center(&mut self, k: usize, center: GeoPoint) {
        self.tables[k].center = center;
    }

    /// Recomputes every table's statistics from scratch and compares.
    pub fn stats_match_recount<F>(&self, layout: &FeatureLayout, areal_cells_of: F) -> bool
    where
        F: Fn(usize) -> Vec<(usize, Value)>,
    {
        self.tables.iter().all(|t| {
            let mut pool = CountPool::empty(layout);
            for &m in &t.members {
                for (f, v) in areal_cells_of(m) {
                    pool.add(layout, f, v);
                }
            }
            pool == t.stats
        })
    }

    /// Checks member/assignment consistency, nonempty tables and radius.
    pub fn check_structure(&self, locations: &[GeoPoint], radius_km: f64) -> bool {
        let mut seen = vec![false; self.assignment.len()];
        for (k, t) in self.tables.iter().enumerate() {
            if t.members.is_empty() {
                return false;
            }
            for &m in &t.members {
                if self.assignment[m] != Some(k) || seen[m] {
                    return false;
                }
                seen[m] = true;
                if geo::geodesic_km(locations[m], t.center) > radius_km {
                    return false;
                }
            }
        }
        self.assignment
            .iter()
            .zip(&seen)
            .all(|(a, &s)| a.is_some() == s)
    }
}

/// Unnormalized Pitman-Yor seating weights `[#_1 - d, ..., #_K - d, α + K d]`.
pub fn py_seating_weights(sizes: &[usize], alpha: f64, discount: f64) -> Vec<f64> {
    let mut w: Vec<f64> = sizes.iter().map(|&s| s as f64 - discount).collect();
    w.push(alpha + sizes.len() as f64 * discount);
    w
}

/// Log of the Pitman-Yor exchangeable partition probability function.
pub fn py_partition_log_prob(sizes: &[usize], alpha: f64, discount: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    let k = sizes.len();
    if n == 0 {
        return 0.0;
    }
    let mut lp = 0.0;
    for j in 1..k {
        lp += (alpha + j as f64 * discount).ln();
    }
    for i in 1..n {
        lp -= (alpha + i as f64).ln();
    }
    for &s in sizes {
        for i in 1..s {
            lp += (i as f64 - discount).ln();
        }
    }
    lp
}

/// Seats `n` customers sequentially by the Pitman-Yor rule and returns
/// each customer's table label (labels in order of first appearance).
pub fn sample_py_partition<R: Rng + ?Sized>(
    n: usize,
    alpha: f64,
    discount: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut sizes: Vec<usize> = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // total weight is i + alpha
        let mut u = rng.random::<f64>() * (i as f64 + alpha);
        let mut choice = sizes.len();
        for (k, &s) in sizes.iter().enumerate() {
            u -= s as f64 - discount;
            if u < 0.0 {
                choice = k;
                break;
            }
        }
        if choice == sizes.len() {
            sizes.push(1);
        } else {
            sizes[choice] += 1;
        }
        labels.push(choice);
    }
    labels
}

/// Log seating weights of an unseated language: one entry per existing
/// table (−∞ when out of range) and one for a new table.
#[derive(Debug, Clone, PartialEq)]
pub struct SeatingWeights {
    pub existing: Vec<f64>,
    pub new_table: f64,
}

impl SeatingWeights {
    /// Normalized probabilities, new table last.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self
            .existing
            .iter()
            .copied()
            .chain(std::iter::once(self.new_table))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = self
            .existing
            .iter()
            .chain(std::iter::once(&self.new_table))
            .map(|&w| (w - max).exp())
            .collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        p
    }
}

pub fn seating_log_weights(
    state: &AreaState,
    location: GeoPoint,
    areal_cells: &[(usize, Value)],
    cfg: &PyConfig,
    layout: &FeatureLayout,
) -> SeatingWeights {
    let log_cap = cfg.log_cap_area();
    let existing = state
        .tables
        .iter()
        .map(|t| {
            if geo::geodesic_km(location, t.center) > cfg.radius_km {
                return f64::NEG_INFINITY;
            }
            let lik: f64 = areal_cells
                .iter()
                .map(|&(f, v)| t.stats.predictive(layout, f, v).ln())
                .sum();
            (t.size() as f64 - cfg.discount).ln() + lik - log_cap
        })
        .collect();
    let base: f64 = areal_cells
        .iter()
        .map(|&(f, _)| -(layout.arity(f) as f64).ln())
        .sum();
    let new_table = (cfg.alpha + state.n_tables() as f64 * cfg.discount).ln()
        + base
        + new_table_location_log_factor(location, cfg);
    SeatingWeights {
        existing,
        new_table,
    }
}

/// Location factor for a language opening a table, with its center
/// marginalized under the center prior.
pub fn new_table_location_log_factor(location: GeoPoint, cfg: &PyConfig) -> f64 {
    match &cfg.center_prior {
        CenterPrior::Globe => -geo::globe_area_km2().ln(),
        CenterPrior::Grid(grid) => {
            let covering = grid
                .iter()
                .filter(|&&g| geo::geodesic_km(location, g) <= cfg.radius_km)
                .count();
            (covering as f64 / grid.len() as f64).ln() - cfg.log_cap_area()
        }
    }
}

/// Draws a center for a table opened by a language at `location`: uniform on
/// the cap around it, or uniform among the covering grid points.
pub fn draw_new_center<R: Rng + ?Sized>(
    location: GeoPoint,
    cfg: &PyConfig,
    rng: &mut R,
) -> Result<GeoPoint> {
    match &cfg.center_prior {
        CenterPrior::Globe => geo::sample_uniform_ball(location, cfg.radius_km, rng),
        CenterPrior::Grid(grid) => {
            let covering: Vec<GeoPoint> = grid
                .iter()
                .copied()
                .filter(|&g| geo::geodesic_km(location, g) <= cfg.radius_km)
                .collect();
            covering
                .choose(rng)
                .copied()
                .ok_or_else(|| Error::Argument("no grid center covers the language".into()))
        }
    }
}

pub fn center_feasible(
    members: &[usize],
    locations: &[GeoPoint],
    center: GeoPoint,
    radius_km: f64,
) -> bool {
    members
        .iter()
        .all(|&m| geo::geodesic_km(locations[m], center) <= radius_km)
}

/// Log location density of the partition with centers marginalized as in
/// the seating factors: per table, the opening factor of its first member
/// and `1 / cap_area` for every further member (exact count of covering grid
/// points under a grid prior). −∞ if any current center is infeasible.
pub fn location_log_prob(state: &AreaState, locations: &[GeoPoint], cfg: &PyConfig) -> f64 {
    let log_cap = cfg.log_cap_area();
    let mut lp = 0.0;
    for t in &state.tables {
        if !center_feasible(&t.members, locations, t.center, cfg.radius_km) {
            return f64::NEG_INFINITY;
        }
        let s = t.size() as f64;
        lp += match &cfg.center_prior {
            CenterPrior::Globe => -geo::globe_area_km2().ln() - (s - 1.0) * log_cap,
            CenterPrior::Grid(grid) => {
                let covering = grid
                    .iter()
                    .filter(|&&g| center_feasible(&t.members, locations, g, cfg.radius_km))
                    .count();
                (covering as f64 / grid.len() as f64).ln() - s * log_cap
            }
        };
    }
    lp
}

/// Collapsed log likelihood of all table statistics.
pub fn tables_log_marginal(state: &AreaState, layout: &FeatureLayout) -> f64 {
    state.tables.iter().map(|t| t.stats.log_marginal(layout)).sum()
}
