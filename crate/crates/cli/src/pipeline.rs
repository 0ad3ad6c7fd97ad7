//! The batch pipelines behind each subcommand. Every function is pure given
//! its configuration (seed included) and writes its artifacts in a fixed
//! order, so repeated runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use areal_core::analysis::{
    area_report, arealness, category_report, genetic_baseline, kmeans, map_clustering,
    predict_heldout, PredictMode, Prediction, SourceWeights,
};
use areal_core::areal::PyConfig;
use areal_core::coalescent::{to_newick, CoalTree, FixedGrouping, MutationModel};
use areal_core::data::{
    hide_cells, load_dataset, preprocess, read_heldout, write_dataset, write_heldout, Dataset,
    HeldOutCell,
};
use areal_core::metrics::{
    gold_ie_areas, loo_accuracy, normalized_edit, nvi, pairwise_f, purity, rand_index,
    subtree_score, Clustering,
};
use areal_core::sampler::{
    run_chain, write_trace, GeneticSpec, ModelConfig, ModelState, SampleRecord, SamplerConfig,
    SourcePolicy, StateSnapshot,
};
use areal_core::synth::{generate_dataset, SynthSpec, Truth};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Mode, RunConfig};
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Salt separating the warm-start phase's random stream from the restarts.
const WARM_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Paths of the two CSV files of a dataset.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub data: PathBuf,
    pub features: PathBuf,
}

impl Inputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            data: dir.join("data.csv"),
            features: dir.join("features.csv"),
        }
    }

    /// Loads and preprocesses the dataset.
    pub fn load(&self, cfg: &RunConfig) -> Result<Dataset> {
        let raw = load_dataset(&self.data, &self.features).map_err(CliError::data)?;
        preprocess(&raw, cfg.min_known, cfg.min_coverage).map_err(CliError::data)
    }
}

pub fn model_config(data: &Dataset, cfg: &RunConfig) -> Result<ModelConfig> {
    let py = PyConfig::new(cfg.alpha, cfg.discount, cfg.radius_km)?;
    let genetic = match cfg.mode {
        Mode::FixedGenus => {
            let labels: Vec<&str> = data.languages.iter().map(|l| l.genus.as_str()).collect();
            GeneticSpec::Fixed(FixedGrouping::from_labels(&labels).map_err(CliError::data)?)
        }
        Mode::FixedFamily => {
            let labels: Vec<&str> = data.languages.iter().map(|l| l.family.as_str()).collect();
            GeneticSpec::Fixed(FixedGrouping::from_labels(&labels).map_err(CliError::data)?)
        }
        Mode::Full => GeneticSpec::Tree,
    };
    let mut model = ModelConfig::new(data, py, genetic)?;
    let arities: Vec<usize> = data.features.iter().map(|f| f.arity).collect();
    model.mutation = MutationModel::uniform(cfg.mutation_rate, &arities)?;
    Ok(model)
}

pub fn sampler_config(cfg: &RunConfig) -> SamplerConfig {
    SamplerConfig {
        iterations: cfg.iterations,
        restarts: cfg.restarts,
        tree_refit_interval: cfg.tree_refit_interval,
        mh_sigma_degrees: cfg.mh_sigma_degrees,
        sample_thinning: cfg.sample_thinning,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
    }
}

pub struct FitResult {
    pub map: ModelState,
    pub map_log_prob: f64,
    /// Samples used for posterior summaries.
    pub samples: Vec<SampleRecord>,
    /// Every recorded sample: the restarts in order, then the warm phase.
    pub trace: Vec<SampleRecord>,
}

/// Restarts from random states, then (if `sample_iterations > 0`) one
/// warm-started chain from the best state whose thinned samples summarize
/// the posterior.
pub fn fit_model(data: &Dataset, model: &ModelConfig, cfg: &RunConfig) -> Result<FitResult> {
    let sc = sampler_config(cfg);
    let first = run_chain(data, model, &sc, None)?;
    if cfg.sample_iterations == 0 {
        if first.samples.is_empty() {
            return Err(CliError::Usage(
                "no samples recorded: burn_in must be below iterations".into(),
            ));
        }
        return Ok(FitResult {
            map: first.map,
            map_log_prob: first.map_log_prob,
            trace: first.samples.clone(),
            samples: first.samples,
        });
    }
    let warm_cfg = SamplerConfig {
        iterations: cfg.sample_iterations,
        restarts: 1,
        burn_in: 0,
        seed: cfg.seed ^ WARM_SEED_SALT,
        ..sc
    };
    let snap = first.map.snapshot();
    let second = run_chain(data, model, &warm_cfg, Some(&snap))?;
    if second.samples.is_empty() {
        return Err(CliError::Usage(
            "no samples recorded: sample_thinning exceeds sample_iterations".into(),
        ));
    }
    let mut trace = first.samples;
    trace.extend(second.samples.iter().cloned());
    Ok(FitResult {
        map: second.map,
        map_log_prob: second.map_log_prob,
        samples: second.samples,
        trace,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn leaf_names(data: &Dataset) -> Vec<&str> {
    data.languages.iter().map(|l| l.name.as_str()).collect()
}

/// Writes every artifact of a fit into `dir`.
pub fn write_fit(dir: &Path, data: &Dataset, cfg: &RunConfig, fit: &FitResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    write_dataset(data, &dir.join("data.csv"), &dir.join("features.csv"))?;
    write_json(&dir.join("map.json"), &fit.map.snapshot())?;
    write_json(&dir.join("samples.json"), &fit.samples)?;
    let mut trace = std::io::BufWriter::new(fs::File::create(dir.join("trace.tsv"))?);
    write_trace(&fit.trace, &mut trace)?;
    trace.flush()?;

    let mut w = csv::Writer::from_path(dir.join("areas.csv"))?;
    w.write_record(["area", "center_lat", "center_lon", "size", "genus", "languages"])?;
    for (i, a) in area_report(data, &fit.map, cfg.min_area_size, cfg.require_multi_genus)
        .iter()
        .enumerate()
    {
        for g in &a.genera {
            w.write_record([
                i.to_string(),
                a.center.lat().to_string(),
                a.center.lon().to_string(),
                a.size.to_string(),
                g.genus.clone(),
                g.languages.join(";"),
            ])?;
        }
    }
    w.flush()?;

    let mut rows = arealness(data, &fit.samples)?;
    rows.sort_by(|a, b| a.p_genetic.total_cmp(&b.p_genetic).then(a.id.cmp(&b.id)));
    let mut w = csv::Writer::from_path(dir.join("arealness.csv"))?;
    w.write_record(["feature_id", "name", "category", "p_genetic"])?;
    for r in &rows {
        w.write_record([r.id.to_string(), r.name.clone(), r.category.clone(), r.p_genetic.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("categories.csv"))?;
    w.write_record(["category", "mean_p_genetic", "n_features"])?;
    for c in category_report(&rows)? {
        w.write_record([c.category, c.mean_p_genetic.to_string(), c.n_features.to_string()])?;
    }
    w.flush()?;

    if let Some(tree) = fit.map.genetic().tree() {
        fs::write(dir.join("tree.nwk"), to_newick(tree, &leaf_names(data)) + "\n")?;
    }
    Ok(())
}

fn fit_into(dir: &Path, data: &Dataset, cfg: &RunConfig) -> Result<()> {
    let model = model_config(data, cfg)?;
    let fit = fit_model(data, &model, cfg)?;
    write_fit(dir, data, cfg, &fit)
}

fn repeat_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("repeat_{i}"))
}

/// The `fit` command. With `hide_fraction > 0` each of `hide_repeats`
/// repeats hides its own cells (seed `seed + i`) and is fit separately into
/// `out/repeat_i`, alongside its `heldout.csv`.
pub fn fit(inputs: &Inputs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = inputs.load(cfg)?;
    fs::create_dir_all(out)?;
    if cfg.hide_fraction <= 0.0 {
        return fit_into(out, &data, cfg);
    }
    if cfg.hide_repeats == 0 {
        return Err(CliError::Usage("hide_repeats must be positive".into()));
    }
    fs::write(out.join("config.txt"), cfg.to_text())?;
    (0..cfg.hide_repeats)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let (train, held) = hide_cells(&data, cfg.hide_fraction, seed)?;
            if held.is_empty() {
                return Err(CliError::Usage(
                    "hide_fraction hides no cells on this dataset".into(),
                ));
            }
            let dir = repeat_dir(out, i);
            let rcfg = RunConfig {
                seed,
                ..cfg.clone()
            };
            fit_into(&dir, &train, &rcfg)?;
            write_heldout(&held, &dir.join("heldout.csv"))?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

/// A fit reloaded from its directory.
pub struct LoadedFit {
    pub cfg: RunConfig,
    pub data: Dataset,
    pub model: ModelConfig,
    pub map: ModelState,
    pub samples: Vec<SampleRecord>,
}

fn require(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::Data(format!("missing fit artifact {}", path.display())))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(require(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_fit(dir: &Path) -> Result<LoadedFit> {
    let mut cfg = RunConfig::default();
    cfg.apply_file(require(&dir.join("config.txt"))?)?;
    let data = load_dataset(
        require(&dir.join("data.csv"))?,
        require(&dir.join("features.csv"))?,
    )
    .map_err(CliError::data)?;
    let model = model_config(&data, &cfg)?;
    let snap: StateSnapshot = read_json(&dir.join("map.json"))?;
    let samples: Vec<SampleRecord> = read_json(&dir.join("samples.json"))?;
    let map = ModelState::from_snapshot(&data, &model, &snap, ChaCha8Rng::seed_from_u64(cfg.seed))
        .map_err(CliError::data)?;
    if samples.iter().any(|s| s.source_counts.len() != data.n_features()) {
        return Err(CliError::Data("samples do not match the training features".into()));
    }
    Ok(LoadedFit {
        cfg,
        data,
        model,
        map,
        samples,
    })
}

/// Fit directories of a run: the `repeat_i` subdirectories in index order,
/// or the directory itself.
pub fn fit_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", dir.display())));
    }
    let mut repeats: Vec<(usize, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let i = name.strip_prefix("repeat_")?.parse().ok()?;
            e.path().is_dir().then_some((i, e.path()))
        })
        .collect();
    repeats.sort();
    if repeats.is_empty() {
        Ok(vec![dir.to_path_buf()])
    } else {
        Ok(repeats.into_iter().map(|(_, p)| p).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictRow {
    pub repeat: usize,
    pub areal: Prediction,
    pub baseline: Prediction,
}

/// The `predict` command: scores each repeat's held-out cells under the
/// areal model and under the genetic-only baseline fit on the same cells.
pub fn predict(fit_dir: &Path, heldout: Option<&Path>, mode: Option<PredictMode>) -> Result<Vec<PredictRow>> {
    let dirs = fit_dirs(fit_dir)?;
    if heldout.is_some() && dirs.len() > 1 {
        return Err(CliError::Usage(
            "--heldout cannot be combined with a multi-repeat fit directory".into(),
        ));
    }
    dirs.par_iter()
        .enumerate()
        .map(|(i, dir)| {
            let fit = load_fit(dir)?;
            let held_path = match heldout {
                Some(p) => p.to_path_buf(),
                None => dir.join("heldout.csv"),
            };
            let held: Vec<HeldOutCell> = read_heldout(require(&held_path)?).map_err(CliError::data)?;
            if held.is_empty() {
                return Err(CliError::Data(format!("{} is empty", held_path.display())));
            }
            let mode = mode.unwrap_or(fit.cfg.predict_mode);
            let weights = SourceWeights::from_samples(&fit.samples, fit.data.n_features())
                .map_err(CliError::data)?;
            let areal = predict_heldout(&fit.data, &fit.map, &weights, &held, mode)
                .map_err(CliError::data)?;
            let base = genetic_baseline(&fit.data, &fit.model, fit.cfg.seed)?;
            let baseline = predict_heldout(
                &fit.data,
                &base,
                &SourceWeights::all_genetic(fit.data.n_features()),
                &held,
                mode,
            )
            .map_err(CliError::data)?;
            Ok(PredictRow {
                repeat: i,
                areal,
                baseline,
            })
        })
        .collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// CSV report: one row per repeat and model, then mean and sd rows.
pub fn predict_report(rows: &[PredictRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["repeat", "model", "accuracy", "log_prob", "n_cells"])?;
    for r in rows {
        for (name, p) in [("baseline", &r.baseline), ("areal", &r.areal)] {
            w.write_record([
                r.repeat.to_string(),
                name.to_string(),
                p.accuracy.to_string(),
                p.mean_log_prob.to_string(),
                p.n_cells.to_string(),
            ])?;
        }
    }
    for name in ["baseline", "areal"] {
        let pick = |r: &PredictRow| if name == "areal" { r.areal } else { r.baseline };
        let acc: Vec<f64> = rows.iter().map(|r| pick(r).accuracy).collect();
        let lp: Vec<f64> = rows.iter().map(|r| pick(r).mean_log_prob).collect();
        let (am, asd) = mean_sd(&acc);
        let (lm, lsd) = mean_sd(&lp);
        let cells: usize = rows.iter().map(|r| pick(r).n_cells).sum();
        w.write_record(["mean".into(), name.into(), am.to_string(), lm.to_string(), cells.to_string()])?;
        w.write_record(["sd".into(), name.into(), asd.to_string(), lsd.to_string(), cells.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
        .expect("csv output is utf-8"))
}

/// Reference labeling for `eval`.
#[derive(Debug, Clone)]
pub enum Gold {
    /// The two gold Indo-European areas; other languages are singletons.
    Areas,
    Genus,
    Family,
    /// Planted areas of a synthetic dataset.
    Truth(PathBuf),
}

impl Gold {
    pub fn labels(&self, data: &Dataset) -> Result<Clustering> {
        Ok(match self {
            Gold::Areas => gold_ie_areas(&leaf_names(data)),
            Gold::Genus => {
                Clustering::from_names(&data.languages.iter().map(|l| &l.genus).collect::<Vec<_>>())
            }
            Gold::Family => {
                Clustering::from_names(&data.languages.iter().map(|l| &l.family).collect::<Vec<_>>())
            }
            Gold::Truth(path) => {
                let truth = Truth::read_json(require(path)?).map_err(CliError::data)?;
                let labels = data
                    .languages
                    .iter()
                    .map(|l| {
                        truth.areas.get(l.id as usize).copied().ok_or_else(|| {
                            CliError::Data(format!("language id {} is not in the truth file", l.id))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Clustering::new(labels)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub metric: String,
    pub value: f64,
}

fn clustering_scores(c: &Clustering, g: &Clustering) -> Result<[(&'static str, f64); 4]> {
    Ok([
        ("rand", rand_index(c, g)?),
        ("f_score", pairwise_f(c, g)?),
        ("edit", normalized_edit(c, g)?),
        ("nvi", nvi(c, g)?),
    ])
}

fn tree_scores(tree: &CoalTree, g: &Clustering) -> Result<[(&'static str, f64); 3]> {
    let labels: Vec<String> = g.labels().iter().map(ToString::to_string).collect();
    Ok([
        ("purity", purity(tree, &labels)?),
        ("subtree", subtree_score(tree, &labels)?),
        ("loo_accuracy", loo_accuracy(tree, &labels)?),
    ])
}

fn push_rows<const K: usize>(rows: &mut Vec<EvalRow>, model: &str, scores: [(&str, f64); K]) {
    rows.extend(scores.into_iter().map(|(m, v)| EvalRow {
        model: model.into(),
        metric: m.into(),
        value: v,
    }));
}

/// The `eval` command: clustering scores of the MAP areas (and tree scores
/// of the MAP genealogy in full mode) against a gold labeling. With
/// `baselines`, also scores K-means (best K per metric over the configured
/// candidates) and a flat Pitman-Yor model in which every cell is areal.
pub fn eval(fit_dir: &Path, gold: &Gold, baselines: bool) -> Result<Vec<EvalRow>> {
    let fit = load_fit(fit_dir)?;
    let g = gold.labels(&fit.data)?;
    let mut rows = Vec::new();
    push_rows(&mut rows, "areal", clustering_scores(&map_clustering(&fit.map), &g)?);
    if let Some(tree) = fit.map.genetic().tree() {
        push_rows(&mut rows, "areal", tree_scores(tree, &g)?);
    }
    if !baselines {
        return Ok(rows);
    }
    let n = fit.data.n_languages();
    let ks: Vec<usize> = fit.cfg.kmeans_ks.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    if ks.is_empty() {
        return Err(CliError::Usage(format!("no K-means candidate lies in [1, {n}]")));
    }
    let per_k: Vec<[(&str, f64); 4]> = ks
        .par_iter()
        .map(|&k| clustering_scores(&kmeans(&fit.data, k, fit.cfg.seed)?, &g))
        .collect::<Result<_>>()?;
    let mut best = per_k[0];
    for s in &per_k[1..] {
        for (b, x) in best.iter_mut().zip(s) {
            b.1 = b.1.max(x.1);
        }
    }
    push_rows(&mut rows, "kmeans", best);

    let mut flat = fit.model.clone();
    flat.sources = SourcePolicy::AllAreal;
    let flat_fit = fit_model(&fit.data, &flat, &fit.cfg)?;
    push_rows(&mut rows, "flat_py", clustering_scores(&map_clustering(&flat_fit.map), &g)?);
    Ok(rows)
}

pub fn eval_report(rows: &[EvalRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "metric", "value"])?;
    for r in rows {
        w.write_record([r.model.clone(), r.metric.clone(), r.value.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
        .expect("csv output is utf-8"))
}

pub fn synth_spec(cfg: &RunConfig) -> Result<SynthSpec> {
    let mut spec = SynthSpec::new(cfg.n_languages, cfg.n_features);
    spec.arity = cfg.arity;
    spec.py = PyConfig::new(cfg.alpha, cfg.discount, cfg.radius_km)?;
    spec.mutation_rate = cfg.mutation_rate;
    spec.missing_rate = cfg.missing_rate;
    if !cfg.planted_centers.is_empty() {
        spec.planted_centers = Some(cfg.planted_centers.clone());
    }
    if !cfg.planted_pi.is_empty() {
        spec.planted_pi = Some(
            (0..cfg.n_features)
                .map(|f| cfg.planted_pi[f % cfg.planted_pi.len()])
                .collect(),
        );
    }
    if cfg.n_genera > 0 {
        spec.n_genera = cfg.n_genera;
    }
    if cfg.n_families > 0 {
        spec.n_families = cfg.n_families;
    }
    if cfg.genus_spread_km > 0.0 {
        spec.genus_spread_km = Some(cfg.genus_spread_km);
    }
    Ok(spec)
}

/// The `simulate` command: a synthetic dataset in the input CSV format plus
/// its ground truth (`truth.json`, `truth.nwk`).
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(Dataset, Truth)> {
    let spec = synth_spec(cfg)?;
    let (data, truth) = generate_dataset(&spec, cfg.seed)?;
    fs::create_dir_all(out)?;
    write_dataset(&data, &out.join("data.csv"), &out.join("features.csv"))?;
    truth.write_json(&out.join("truth.json"))?;
    fs::write(out.join("truth.nwk"), format!("{}\n", truth.newick))?;
    fs::write(out.join("config.txt"), cfg.to_text())?;
    Ok((data, truth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub radius_km: f64,
    pub purity: f64,
    pub subtree: f64,
    pub loo_accuracy: f64,
    pub n_areas: usize,
}

/// The `radius-sweep` command: fits the full model once per radius (in
/// parallel) and scores each MAP genealogy against the gold labels.
pub fn radius_sweep(inputs: &Inputs, cfg: &RunConfig, gold: &Gold) -> Result<Vec<SweepRow>> {
    if cfg.radii.is_empty() {
        return Err(CliError::Usage("no radii given".into()));
    }
    let data = inputs.load(cfg)?;
    let g = gold.labels(&data)?;
    cfg.radii
        .par_iter()
        .map(|&r| {
            let rcfg = RunConfig {
                radius_km: r,
                mode: Mode::Full,
                ..cfg.clone()
            };
            let model = model_config(&data, &rcfg)?;
            let fit = fit_model(&data, &model, &rcfg)?;
            let tree = fit.map.genetic().tree().expect("full mode keeps a tree");
            let [(_, purity), (_, subtree), (_, loo_accuracy)] = tree_scores(tree, &g)?;
            Ok(SweepRow {
                radius_km: r,
                purity,
                subtree,
                loo_accuracy,
                n_areas: fit.map.areas().n_tables(),
            })
        })
        .collect()
}

pub fn sweep_report(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["radius_km", "purity", "subtree", "loo_accuracy", "n_areas"])?;
    for r in rows {
        w.write_record([
            r.radius_km.to_string(),
            r.purity.to_string(),
            r.subtree.to_string(),
            r.loo_accuracy.to_string(),
            r.n_areas.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
        .expect("csv output is utf-8"))
}
