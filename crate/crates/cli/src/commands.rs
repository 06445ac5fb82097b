use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ekss::io::{self, InstanceRecord};
use ekss::{
    apply_missing, ekss, ekss0, gen_angled_uos, gen_random_uos, tsc, AngleSpec, EnsembleConfig, MetricReport, SeedSpec,
    TscWeights,
};

use crate::exit;
use crate::experiment::{self, Algorithm, ExperimentConfig, ExperimentOutcome, ExperimentOverrides, Mode, Spacing};
use crate::theory::{self, TheoryConfig};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "EKSS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ekss", version, about = "Ensemble K-subspaces clustering tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic union-of-subspaces dataset.
    Generate(GenerateArgs),
    /// Cluster a dataset with EKSS, EKSS-0 or TSC.
    Cluster(ClusterArgs),
    /// Score a clustering against ground truth and print a JSON report.
    Evaluate(EvaluateArgs),
    /// Run an experiment grid and write tidy CSV results.
    Experiment(ExperimentArgs),
    /// Run the statistical checks and print a JSON report.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Ambient dimension.
    #[arg(long = "D", default_value_t = 100)]
    pub ambient: usize,
    /// Number of subspaces.
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    /// Subspace dimensions, one value or one per subspace.
    #[arg(long = "d", value_delimiter = ',', default_value = "3")]
    pub dims: Vec<usize>,
    /// Points per subspace, one value or one per subspace.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub nk: Vec<usize>,
    /// Noise level; each point gets N(0, sigma^2/D I) noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Build three subspaces at this principal angle instead of random ones.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Zero this many random coordinates of every point.
    #[arg(long)]
    pub missing: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for data.csv, labels.csv and instance.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Threshold choice: an explicit q, `none`, or `auto` for the per-algorithm
/// rule applied to N/K points per cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QArg {
    Auto,
    None,
    Value(usize),
}

impl FromStr for QArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "auto" => Ok(QArg::Auto),
            "none" => Ok(QArg::None),
            _ => match s.parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("expected a positive integer, `none` or `auto`, got `{s}`")),
                Ok(q) => Ok(QArg::Value(q)),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Data CSV, one point per row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::Ekss)]
    pub algo: Algorithm,
    /// Number of output clusters.
    #[arg(long = "K")]
    pub k: usize,
    /// Candidate subspaces per base clustering (defaults to K).
    #[arg(long = "Kbar")]
    pub kbar: Option<usize>,
    /// Candidate subspace dimension (required for ekss and ekss0).
    #[arg(long = "dbar")]
    pub dbar: Option<usize>,
    /// Threshold parameter: integer, `none` or `auto`.
    #[arg(long, default_value = "auto")]
    pub q: QArg,
    /// Number of base clusterings.
    #[arg(long = "B", default_value_t = 1000)]
    pub b: usize,
    /// KSS iterations per base clustering.
    #[arg(long = "T", default_value_t = 3)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight base clusterings by their KSS fit.
    #[arg(long)]
    pub weighted: bool,
    /// Use raw TSC weights |<x_i, x_j>| instead of exp(-2 arccos).
    #[arg(long)]
    pub tsc_abs_weights: bool,
    /// Skip scaling points to unit norm.
    #[arg(long)]
    pub no_normalize: bool,
    /// Output label file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the affinity handed to spectral clustering.
    #[arg(long)]
    pub affinity_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Affinity CSV for the no-false-connections check.
    #[arg(long)]
    pub affinity: Option<PathBuf>,
    /// Data CSV for the q-angular separation (requires --q).
    #[arg(long, requires = "q")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub q: Option<usize>,
    /// instance.json whose bases give pairwise subspace affinities.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_delimiter = ',')]
    pub nk: Option<Vec<usize>>,
    #[arg(long = "d", value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    #[arg(long)]
    pub theta_count: Option<usize>,
    #[arg(long, value_enum)]
    pub theta_spacing: Option<Spacing>,
    /// Noise variances.
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "D")]
    pub ambient: Option<usize>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Ensemble sizes for fig1_progression.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub weighted: bool,
    /// Monte-Carlo samples per estimate in theory_suite.
    #[arg(long)]
    pub samples: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo samples per estimate.
    #[arg(long, default_value_t = theory::DEFAULT_SAMPLES)]
    pub samples: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Sizes the global thread pool from `EKSS_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Cluster(a) => cluster(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Theory(a) => run_theory(a),
    }
}

fn broadcast(values: &[usize], k: usize, what: &str) -> Result<Vec<usize>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values.to_vec()),
        n => bail!("--{what} has {n} values; give one or K = {k}"),
    }
}

fn generate(a: GenerateArgs) -> Result<u8> {
    let seed = SeedSpec::new(a.seed, 0);
    let mut inst = match a.theta {
        Some(theta) => {
            if a.k != 3 || a.dims.len() != 1 {
                bail!("--theta builds exactly K = 3 subspaces of one dimension --d");
            }
            let counts = broadcast(&a.nk, 3, "nk")?;
            gen_angled_uos::<f64>(a.ambient, AngleSpec::new(theta, a.dims[0])?, &counts, a.sigma, &seed)?
        }
        None => {
            let dims = broadcast(&a.dims, a.k, "d")?;
            let counts = broadcast(&a.nk, a.k, "nk")?;
            gen_random_uos::<f64>(a.ambient, &dims, &counts, a.sigma, &seed)?
        }
    };
    if let Some(s) = a.missing {
        inst = apply_missing(&inst, s, &seed)?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    io::write_data(&a.out.join("data.csv"), &inst.data)?;
    io::write_labels(&a.out.join("labels.csv"), &inst.true_labels)?;
    InstanceRecord::from_instance(&inst).write(&a.out.join("instance.json"))?;
    Ok(exit::SUCCESS)
}

fn cluster(a: ClusterArgs) -> Result<u8> {
    let mut data = io::read_data::<f64>(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    if !a.no_normalize {
        data.normalize_columns()?;
    }
    let n_k = data.n_points() / a.k.max(1);
    let q = match a.q {
        QArg::Auto => Some(a.algo.default_q(n_k)),
        QArg::None => None,
        QArg::Value(q) => Some(q),
    };
    let out = match a.algo {
        Algorithm::Tsc => {
            let q = q.context("TSC needs a threshold; pass --q <n> or --q auto")?;
            let weights = if a.tsc_abs_weights {
                TscWeights::AbsInnerProduct
            } else {
                TscWeights::ArcCos
            };
            tsc(&data, q, a.k, weights, a.seed)?
        }
        Algorithm::Ekss | Algorithm::Ekss0 => {
            let dbar = a.dbar.context("--dbar is required for ekss and ekss0")?;
            let cfg = EnsembleConfig::new(a.kbar.unwrap_or(a.k), dbar, a.k)
                .threshold(q)
                .base_clusterings(a.b)
                .iterations(a.t)
                .weighted(a.weighted);
            if a.algo == Algorithm::Ekss {
                ekss(&data, &cfg, a.seed)?
            } else {
                ekss0(&data, &cfg, a.seed)?
            }
        }
    };
    io::write_labels(&a.out, &out.labels)?;
    if let Some(path) = &a.affinity_out {
        io::write_matrix(path, out.affinity.values())?;
    }
    Ok(exit::SUCCESS)
}

fn write_json<S: serde::Serialize>(value: &S, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<u8> {
    let labels = io::read_labels(&a.labels)?;
    let truth = io::read_labels(&a.truth)?;
    let affinity = a.affinity.as_deref().map(io::read_matrix::<f64>).transpose()?;
    let data = a.data.as_deref().map(io::read_data::<f64>).transpose()?;
    let bases = match &a.instance {
        Some(path) => Some(InstanceRecord::read(path)?.bases::<f64>()?),
        None => None,
    };
    let separation = match (&data, a.q) {
        (Some(d), Some(q)) => Some((d, q)),
        _ => None,
    };
    let report = MetricReport::compute(
        &labels,
        &truth,
        affinity.as_ref().map(|m| m.as_view()),
        separation,
        bases.as_deref(),
    )?;
    write_json(&report, a.out.as_deref())?;
    Ok(exit::SUCCESS)
}

fn run_experiment(a: ExperimentArgs) -> Result<u8> {
    let from_file = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ExperimentOverrides::default(),
    };
    let flags = ExperimentOverrides {
        mode: a.mode,
        nk: a.nk,
        dims: a.dims,
        thetas: a.thetas,
        theta_count: a.theta_count,
        theta_spacing: a.theta_spacing,
        sigma2: a.sigma2,
        algorithms: a.algorithms,
        trials: a.trials,
        seed: a.seed,
        output_dir: a.out,
        ambient: a.ambient,
        n_subspaces: a.k,
        base_clusterings: a.b,
        budgets: a.budgets,
        iterations: a.t,
        weighted: a.weighted.then_some(true),
        samples: a.samples,
        theta_range: None,
    };
    let cfg = ExperimentConfig::resolve(from_file.merge(flags))?;
    match experiment::run_experiment(&cfg)? {
        ExperimentOutcome::Table { summary, .. } => {
            for s in &summary {
                eprintln!(
                    "{} N_k={} d={} theta={} sigma2={} B={}: mean error {:.2}%",
                    s.algorithm,
                    s.n_k,
                    s.d,
                    s.theta.map_or("-".into(), |t| format!("{t:.4}")),
                    s.sigma2,
                    s.b.map_or("-".into(), |b| b.to_string()),
                    s.mean_error_pct
                );
            }
            Ok(exit::SUCCESS)
        }
        ExperimentOutcome::Theory(report) => Ok(if report.pass { exit::SUCCESS } else { exit::CHECK_FAILED }),
    }
}

fn run_theory(a: TheoryArgs) -> Result<u8> {
    if a.samples == 0 {
        bail!("--samples must be positive");
    }
    let report = theory::run(&TheoryConfig {
        seed: a.seed,
        samples: a.samples,
    })?;
    write_json(&report, a.out.as_deref())?;
    for c in &report.checks {
        eprintln!("[{}] {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    Ok(if report.pass { exit::SUCCESS } else { exit::CHECK_FAILED })
}
