//! Flat `key = value` run configuration. Defaults reproduce the published
//! protocol; a config file overrides defaults and command-line flags
//! override the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use areal_core::analysis::PredictMode;
use areal_core::geo::GeoPoint;

use crate::error::CliError;

/// How the genetic side of the model is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FixedGenus,
    FixedFamily,
    Full,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FixedGenus => "fixed-genus",
            Mode::FixedFamily => "fixed-family",
            Mode::Full => "full",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed-genus" => Ok(Mode::FixedGenus),
            "fixed-family" => Ok(Mode::FixedFamily),
            "full" => Ok(Mode::Full),
            other => Err(format!(
                "unknown mode `{other}` (expected fixed-genus, fixed-family or full)"
            )),
        }
    }
}

fn predict_mode_str(m: PredictMode) -> &'static str {
    match m {
        PredictMode::Hard => "hard",
        PredictMode::Mixture => "mixture",
    }
}

pub fn parse_predict_mode(s: &str) -> Result<PredictMode, String> {
    match s {
        "hard" => Ok(PredictMode::Hard),
        "mixture" => Ok(PredictMode::Mixture),
        other => Err(format!("unknown prediction mode `{other}` (expected hard or mixture)")),
    }
}

/// Every tunable of a run. Simulation keys are only read by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub radius_km: f64,
    pub alpha: f64,
    pub discount: f64,
    pub mutation_rate: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub mh_sigma_degrees: f64,
    pub tree_refit_interval: usize,
    pub burn_in: usize,
    /// Sweeps of the warm-started sampling phase (0 skips the phase and
    /// uses the post-burn-in samples of the restarts instead).
    pub sample_iterations: usize,
    pub sample_thinning: usize,
    pub min_known: usize,
    pub min_coverage: f64,
    pub hide_fraction: f64,
    pub hide_repeats: usize,
    pub min_area_size: usize,
    pub require_multi_genus: bool,
    pub predict_mode: PredictMode,
    pub radii: Vec<f64>,
    pub kmeans_ks: Vec<usize>,
    pub n_languages: usize,
    pub n_features: usize,
    pub arity: usize,
    pub missing_rate: f64,
    pub planted_centers: Vec<GeoPoint>,
    pub planted_pi: Vec<f64>,
    /// 0 means the generator default.
    pub n_genera: usize,
    pub n_families: usize,
    /// 0 places languages independently of genealogy; otherwise each genus
    /// clusters within this many km of a homeland inside one area.
    pub genus_spread_km: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FixedGenus,
            radius_km: 1000.0,
            alpha: 1.0,
            discount: 0.5,
            mutation_rate: 1.0,
            iterations: 2000,
            restarts: 5,
            seed: 0,
            mh_sigma_degrees: 5.0,
            tree_refit_interval: 10,
            burn_in: 0,
            sample_iterations: 1000,
            sample_thinning: 10,
            min_known: 0,
            min_coverage: 0.0,
            hide_fraction: 0.0,
            hide_repeats: 10,
            min_area_size: 2,
            require_multi_genus: false,
            predict_mode: PredictMode::Hard,
            radii: vec![125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0],
            kmeans_ks: (1..=17).map(|i| 5 * i).collect(),
            n_languages: 60,
            n_features: 40,
            arity: 2,
            missing_rate: 0.0,
            planted_centers: Vec::new(),
            planted_pi: Vec::new(),
            n_genera: 0,
            n_families: 0,
            genus_spread_km: 0.0,
        }
    }
}

fn parse_list<T: FromStr>(value: &str, sep: char) -> Result<Vec<T>, String> {
    value
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse list element `{s}`")))
        .collect()
}

fn parse_centers(value: &str) -> Result<Vec<GeoPoint>, String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (lat, lon) = s
                .split_once(':')
                .ok_or_else(|| format!("center `{s}` is not lat:lon"))?;
            let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude in `{s}`"))?;
            let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude in `{s}`"))?;
            GeoPoint::new(lat, lon).map_err(|e| e.to_string())
        })
        .collect()
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("cannot parse value `{value}` for `{key}`"))
        }
        let v = value.trim();
        let r: Result<(), String> = (|| {
            match key.trim() {
                "mode" => self.mode = v.parse()?,
                "radius_km" => self.radius_km = num(key, v)?,
                "alpha" => self.alpha = num(key, v)?,
                "discount" => self.discount = num(key, v)?,
                "mutation_rate" => self.mutation_rate = num(key, v)?,
                "iterations" => self.iterations = num(key, v)?,
                "restarts" => self.restarts = num(key, v)?,
                "seed" => self.seed = num(key, v)?,
                "mh_sigma_degrees" => self.mh_sigma_degrees = num(key, v)?,
                "tree_refit_interval" => self.tree_refit_interval = num(key, v)?,
                "burn_in" => self.burn_in = num(key, v)?,
                "sample_iterations" => self.sample_iterations = num(key, v)?,
                "sample_thinning" => self.sample_thinning = num(key, v)?,
                "min_known" => self.min_known = num(key, v)?,
                "min_coverage" => self.min_coverage = num(key, v)?,
                "hide_fraction" => self.hide_fraction = num(key, v)?,
                "hide_repeats" => self.hide_repeats = num(key, v)?,
                "min_area_size" => self.min_area_size = num(key, v)?,
                "require_multi_genus" => self.require_multi_genus = num(key, v)?,
                "predict_mode" => self.predict_mode = parse_predict_mode(v)?,
                "radii" => self.radii = parse_list(v, ',')?,
                "kmeans_ks" => self.kmeans_ks = parse_list(v, ',')?,
                "n_languages" => self.n_languages = num(key, v)?,
                "n_features" => self.n_features = num(key, v)?,
                "arity" => self.arity = num(key, v)?,
                "missing_rate" => self.missing_rate = num(key, v)?,
                "planted_centers" => self.planted_centers = parse_centers(v)?,
                "planted_pi" => self.planted_pi = parse_list(v, ',')?,
                "n_genera" => self.n_genera = num(key, v)?,
                "n_families" => self.n_families = num(key, v)?,
                "genus_spread_km" => self.genus_spread_km = num(key, v)?,
                other => return Err(format!("unknown configuration key `{other}`")),
            }
            Ok(())
        })();
        r.map_err(CliError::Usage)
    }

    /// Parses the flat file format: one `key = value` per line, `#`
    /// comments and blank lines ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", i + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Serializes every key so that `apply_text` reproduces this config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.as_str().into());
        kv("radius_km", self.radius_km.to_string());
        kv("alpha", self.alpha.to_string());
        kv("discount", self.discount.to_string());
        kv("mutation_rate", self.mutation_rate.to_string());
        kv("iterations", self.iterations.to_string());
        kv("restarts", self.restarts.to_string());
        kv("seed", self.seed.to_string());
        kv("mh_sigma_degrees", self.mh_sigma_degrees.to_string());
        kv("tree_refit_interval", self.tree_refit_interval.to_string());
        kv("burn_in", self.burn_in.to_string());
        kv("sample_iterations", self.sample_iterations.to_string());
        kv("sample_thinning", self.sample_thinning.to_string());
        kv("min_known", self.min_known.to_string());
        kv("min_coverage", self.min_coverage.to_string());
        kv("hide_fraction", self.hide_fraction.to_string());
        kv("hide_repeats", self.hide_repeats.to_string());
        kv("min_area_size", self.min_area_size.to_string());
        kv("require_multi_genus", self.require_multi_genus.to_string());
        kv("predict_mode", predict_mode_str(self.predict_mode).into());
        kv("radii", join(&self.radii, ","));
        kv("kmeans_ks", join(&self.kmeans_ks, ","));
        kv("n_languages", self.n_languages.to_string());
        kv("n_features", self.n_features.to_string());
        kv("arity", self.arity.to_string());
        kv("missing_rate", self.missing_rate.to_string());
        kv(
            "planted_centers",
            self.planted_centers
                .iter()
                .map(|c| format!("{}:{}", c.lat(), c.lon()))
                .collect::<Vec<_>>()
                .join(";"),
        );
        kv("planted_pi", join(&self.planted_pi, ","));
        kv("n_genera", self.n_genera.to_string());
        kv("n_families", self.n_families.to_string());
        kv("genus_spread_km", self.genus_spread_km.to_string());
        s
    }

    /// Builds a config from defaults, an optional file, then overrides.
    pub fn resolve(
        file: Option<&Path>,
        overrides: &BTreeMap<&str, String>,
    ) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}
