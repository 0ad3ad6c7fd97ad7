use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelState, StateSnapshot};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub restarts: usize,
    /// Sweeps between greedy tree refits (full mode).
    pub tree_refit_interval: usize,
    pub mh_sigma_degrees: f64,
    /// Record every this many sweeps after burn-in.
    pub sample_thinning: usize,
    /// Sweeps before the first recorded sample.
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            restarts: 5,
            tree_refit_interval: 10,
            mh_sigma_degrees: 5.0,
            sample_thinning: 10,
            burn_in: 0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iterations", self.iterations),
            ("restarts", self.restarts),
            ("tree_refit_interval", self.tree_refit_interval),
            ("sample_thinning", self.sample_thinning),
        ] {
            if v == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if !(self.mh_sigma_degrees > 0.0) {
            return Err(Error::Argument("mh_sigma_degrees must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub restart: usize,
    /// 1-based sweep index within the restart.
    pub iteration: usize,
    pub log_prob: f64,
    /// Canonical area labels by first appearance.
    pub partition: Vec<usize>,
    /// Per feature `(ΣZ, Σ(1 − Z))`.
    pub source_counts: Vec<(u32, u32)>,
    pub n_tables: usize,
    /// Cumulative center moves accepted / proposed in this restart.
    pub mh_accepted: u64,
    pub mh_proposed: u64,
}

impl SampleRecord {
    pub fn acceptance_rate(&self) -> f64 {
        if self.mh_proposed == 0 {
            0.0
        } else {
            self.mh_accepted as f64 / self.mh_proposed as f64
        }
    }
}

pub struct ChainOutput {
    pub map: ModelState,
    pub map_log_prob: f64,
    pub map_restart: usize,
    pub samples: Vec<SampleRecord>,
}

struct RestartOutput {
    map: ModelState,
    map_log_prob: f64,
    samples: Vec<SampleRecord>,
}

fn record(state: &ModelState, restart: usize, iteration: usize, log_prob: f64, acc: (u64, u64)) -> SampleRecord {
    SampleRecord {
        restart,
        iteration,
        log_prob,
        partition: state.areas().partition(),
        source_counts: (0..state.n_features()).map(|f| state.source_counts(f)).collect(),
        n_tables: state.areas().n_tables(),
        mh_accepted: acc.0,
        mh_proposed: acc.1,
    }
}

fn run_restart(
    data: &Dataset,
    model: &ModelConfig,
    cfg: &SamplerConfig,
    warm: Option<&StateSnapshot>,
    restart: usize,
) -> Result<RestartOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut state = match warm {
        Some(snap) => ModelState::from_snapshot(data, model, snap, rng)?,
        None => ModelState::init(data, model, rng)?,
    };
    let mut best = (state.joint_log_prob(), state.clone());
    let mut samples = Vec::new();
    let mut acc = (0u64, 0u64);
    for it in 1..=cfg.iterations {
        let (a, p) = state.sweep(data, cfg.mh_sigma_degrees)?;
        acc.0 += a as u64;
        acc.1 += p as u64;
        if model.is_full() && it % cfg.tree_refit_interval == 0 {
            state.refit_tree(data)?;
        }
        let lp = state.joint_log_prob();
        if lp > best.0 {
            best = (lp, state.clone());
        }
        if it > cfg.burn_in && (it - cfg.burn_in) % cfg.sample_thinning == 0 {
            samples.push(record(&state, restart, it, lp, acc));
        }
    }
    Ok(RestartOutput {
        map: best.1,
        map_log_prob: best.0,
        samples,
    })
}

/// Runs `cfg.restarts` independent chains (in parallel) and returns the
/// highest-probability state seen plus the thinned samples of every chain
/// in restart order. Restart `r` uses stream `r` of the seeded generator.
pub fn run_chain(
    data: &Dataset,
    model: &ModelConfig,
    cfg: &SamplerConfig,
    warm: Option<&StateSnapshot>,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let outputs: Vec<RestartOutput> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(data, model, cfg, warm, r))
        .collect::<Result<_>>()?;
    let mut map_restart = 0;
    for (r, o) in outputs.iter().enumerate() {
        if o.map_log_prob > outputs[map_restart].map_log_prob {
            map_restart = r;
        }
    }
    let mut samples = Vec::new();
    let mut map = None;
    let mut map_log_prob = f64::NEG_INFINITY;
    for (r, o) in outputs.into_iter().enumerate() {
        samples.extend(o.samples);
        if r == map_restart {
            map_log_prob = o.map_log_prob;
            map = Some(o.map);
        }
    }
    Ok(ChainOutput {
        map: map.expect("at least one restart"),
        map_log_prob,
        map_restart,
        samples,
    })
}

/// Tab-separated trace: iteration, log probability, table count,
/// acceptance rate; one line per recorded sample.
pub fn write_trace<W: Write>(samples: &[SampleRecord], mut out: W) -> std::io::Result<()> {
    for s in samples {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            s.iteration,
            s.log_prob,
            s.n_tables,
            s.acceptance_rate()
        )?;
    }
    Ok(())
}
