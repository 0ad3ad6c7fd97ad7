use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use areal_cli::config::parse_predict_mode;
use areal_cli::pipeline::{self, Gold, Inputs};
use areal_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "areal", version, about = "Areal and genetic inference over typological data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and write the MAP state, samples, trace and reports.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score held-out cells of a fit against the genetic-only baseline.
    Predict {
        /// Directory written by `fit`.
        #[arg(long)]
        fit_dir: PathBuf,
        /// Held-out cells (defaults to each repeat's heldout.csv).
        #[arg(long)]
        heldout: Option<PathBuf>,
        /// Prediction rule: hard or mixture.
        #[arg(long, value_parser = parse_predict_mode)]
        mode: Option<areal_core::analysis::PredictMode>,
        /// Report file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a fit's areas (and genealogy) against a gold labeling.
    Eval {
        #[arg(long)]
        fit_dir: PathBuf,
        #[arg(long, value_enum)]
        gold: GoldArg,
        /// Truth file written by `simulate` (for --gold truth).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also score K-means and flat Pitman-Yor baselines.
        #[arg(long)]
        baselines: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with its ground truth.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the full model at several radii and score each genealogy.
    RadiusSweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated radii in km.
        #[arg(long)]
        radii: Option<String>,
        #[arg(long, value_enum, default_value = "genus")]
        gold: GoldArg,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Language CSV (id,name,lat,lon,genus,family,features...).
    #[arg(long)]
    data: PathBuf,
    /// Feature CSV (id,name,category,arity).
    #[arg(long)]
    features: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Genetic model: fixed-genus, fixed-family or full.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    radius_km: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other configuration key, as key=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoldArg {
    Areas,
    Genus,
    Family,
    Truth,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut o: BTreeMap<&str, String> = BTreeMap::new();
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        if let Some(v) = &self.mode {
            o.insert("mode", v.clone());
        }
        let nums = [
            ("radius_km", self.radius_km.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("discount", self.discount.map(|v| v.to_string())),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("restarts", self.restarts.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in nums {
            if let Some(v) = v {
                o.insert(k, v);
            }
        }
        for (k, v) in &o {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn gold(arg: GoldArg, truth: Option<&Path>) -> Result<Gold, CliError> {
    Ok(match arg {
        GoldArg::Areas => Gold::Areas,
        GoldArg::Genus => Gold::Genus,
        GoldArg::Family => Gold::Family,
        GoldArg::Truth => Gold::Truth(
            truth
                .ok_or_else(|| CliError::Usage("--gold truth requires --truth".into()))?
                .to_path_buf(),
        ),
    })
}

fn emit(report: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, report).map_err(CliError::from),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit { run, data, out } => {
            let cfg = run.resolve()?;
            pipeline::fit(&Inputs { data: data.data, features: data.features }, &cfg, &out)
        }
        Command::Predict { fit_dir, heldout, mode, out } => {
            let rows = pipeline::predict(&fit_dir, heldout.as_deref(), mode)?;
            emit(&pipeline::predict_report(&rows)?, out.as_deref())
        }
        Command::Eval { fit_dir, gold: g, truth, baselines, out } => {
            let rows = pipeline::eval(&fit_dir, &gold(g, truth.as_deref())?, baselines)?;
            emit(&pipeline::eval_report(&rows)?, out.as_deref())
        }
        Command::Simulate { run, out } => {
            let cfg = run.resolve()?;
            pipeline::simulate(&cfg, &out).map(|_| ())
        }
        Command::RadiusSweep { run, data, radii, gold: g, truth, out } => {
            let mut cfg = run.resolve()?;
            if let Some(r) = radii {
                cfg.set("radii", &r)?;
            }
            let inputs = Inputs { data: data.data, features: data.features };
            let rows = pipeline::radius_sweep(&inputs, &cfg, &gold(g, truth.as_deref())?)?;
            emit(&pipeline::sweep_report(&rows)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("areal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
