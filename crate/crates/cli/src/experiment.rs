//! Synthetic experiment grids. Every cell and trial is seeded from the
//! experiment seed alone, so a configuration reproduces byte-identical CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use ekss::{
    clustering_error, ekss, ekss0, gen_angled_uos, gen_random_uos, io, tsc, AngleSpec, EnsembleConfig, ProblemInstance,
    SeedSpec, TscWeights,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::theory::{self, TheoryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Mode {
    #[serde(rename = "fig1_progression")]
    #[value(name = "fig1_progression")]
    Fig1Progression,
    #[serde(rename = "grid_Nk_by_d")]
    #[value(name = "grid_Nk_by_d")]
    GridNkByD,
    #[serde(rename = "grid_Nk_by_theta")]
    #[value(name = "grid_Nk_by_theta")]
    GridNkByTheta,
    #[serde(rename = "noisy_theta_sweep")]
    #[value(name = "noisy_theta_sweep")]
    NoisyThetaSweep,
    #[serde(rename = "theory_suite")]
    #[value(name = "theory_suite")]
    TheorySuite,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Fig1Progression => "fig1_progression",
            Mode::GridNkByD => "grid_Nk_by_d",
            Mode::GridNkByTheta => "grid_Nk_by_theta",
            Mode::NoisyThetaSweep => "noisy_theta_sweep",
            Mode::TheorySuite => "theory_suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ekss,
    Ekss0,
    Tsc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ekss => "ekss",
            Algorithm::Ekss0 => "ekss0",
            Algorithm::Tsc => "tsc",
        }
    }

    /// Threshold rule for synthetic runs.
    pub fn default_q(self, n_k: usize) -> usize {
        match self {
            Algorithm::Ekss => 3.max(n_k.div_ceil(6)),
            Algorithm::Ekss0 | Algorithm::Tsc => 3.max(n_k.div_ceil(20)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

/// Optional settings from a JSON file or command-line flags. Unset fields
/// take the mode's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOverrides {
    pub mode: Option<Mode>,
    pub nk: Option<Vec<usize>>,
    pub dims: Option<Vec<usize>>,
    pub thetas: Option<Vec<f64>>,
    pub theta_range: Option<(f64, f64)>,
    pub theta_count: Option<usize>,
    pub theta_spacing: Option<Spacing>,
    /// Noise variances `σ²`.
    pub sigma2: Option<Vec<f64>>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub ambient: Option<usize>,
    pub n_subspaces: Option<usize>,
    pub base_clusterings: Option<usize>,
    /// Ensemble sizes for `fig1_progression`.
    pub budgets: Option<Vec<usize>>,
    pub iterations: Option<usize>,
    pub weighted: Option<bool>,
    /// Monte-Carlo samples per probability estimate in `theory_suite`.
    pub samples: Option<u64>,
}

impl ExperimentOverrides {
    /// Fields set in `other` win.
    pub fn merge(self, other: ExperimentOverrides) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            mode, nk, dims, thetas, theta_range, theta_count, theta_spacing, sigma2, algorithms, trials, seed,
            output_dir, ambient, n_subspaces, base_clusterings, budgets, iterations, weighted, samples
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub nk: Vec<usize>,
    pub dims: Vec<usize>,
    pub thetas: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub ambient: usize,
    pub n_subspaces: usize,
    pub base_clusterings: usize,
    pub budgets: Vec<usize>,
    pub iterations: usize,
    pub weighted: bool,
    pub samples: u64,
}

pub fn spaced(lo: f64, hi: f64, count: usize, spacing: Spacing) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            match spacing {
                Spacing::Linear => lo + t * (hi - lo),
                Spacing::Log => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
            }
        })
        .collect()
}

const GRID_NK: [usize; 8] = [10, 20, 40, 75, 125, 200, 325, 500];
const GRID_D: [usize; 8] = [1, 3, 5, 10, 20, 35, 50, 75];

impl ExperimentConfig {
    pub fn resolve(o: ExperimentOverrides) -> Result<Self> {
        let Some(mode) = o.mode else {
            bail!("experiment mode is required");
        };
        let fig1 = mode == Mode::Fig1Progression;
        let (default_theta_count, default_nk, default_dims, default_sigma2) = match mode {
            Mode::Fig1Progression => (1, vec![100], vec![3], vec![0.0]),
            Mode::GridNkByD => (1, GRID_NK.to_vec(), GRID_D.to_vec(), vec![0.0]),
            Mode::GridNkByTheta => (8, GRID_NK.to_vec(), vec![10], vec![0.0]),
            Mode::NoisyThetaSweep => (20, vec![500], vec![10], vec![0.05]),
            Mode::TheorySuite => (1, vec![], vec![], vec![]),
        };
        let angled = matches!(mode, Mode::GridNkByTheta | Mode::NoisyThetaSweep);
        let thetas = match (o.thetas, angled) {
            (Some(t), _) => t,
            (None, true) => {
                let (lo, hi) = o.theta_range.unwrap_or((0.001, 0.8));
                let count = o.theta_count.unwrap_or(default_theta_count);
                spaced(lo, hi, count, o.theta_spacing.unwrap_or_default())
            }
            (None, false) => vec![],
        };
        let default_algorithms = if fig1 {
            vec![Algorithm::Ekss]
        } else {
            vec![Algorithm::Ekss, Algorithm::Ekss0, Algorithm::Tsc]
        };
        let cfg = Self {
            mode,
            nk: o.nk.unwrap_or(default_nk),
            dims: o.dims.unwrap_or(default_dims),
            thetas,
            sigma2: o.sigma2.unwrap_or(default_sigma2),
            algorithms: o.algorithms.unwrap_or(default_algorithms),
            trials: o.trials.unwrap_or(10),
            seed: o.seed.unwrap_or(0),
            output_dir: o.output_dir.unwrap_or_else(|| PathBuf::from(format!("results/{}", mode.name()))),
            ambient: o.ambient.unwrap_or(100),
            n_subspaces: o.n_subspaces.unwrap_or(if fig1 { 4 } else { 3 }),
            base_clusterings: o.base_clusterings.unwrap_or(1000),
            budgets: o.budgets.unwrap_or_else(|| vec![1, 5, 50]),
            iterations: o.iterations.unwrap_or(3),
            weighted: o.weighted.unwrap_or(false),
            samples: o.samples.unwrap_or(theory::DEFAULT_SAMPLES),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.mode == Mode::TheorySuite {
            return Ok(());
        }
        if self.nk.is_empty() || self.dims.is_empty() || self.sigma2.is_empty() || self.algorithms.is_empty() {
            bail!("grids and the algorithm list must be nonempty");
        }
        if self.nk.contains(&0) || self.dims.contains(&0) {
            bail!("N_k and d must be positive");
        }
        if self.sigma2.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            bail!("noise variances must be finite and nonnegative");
        }
        if self.n_subspaces == 0 || self.base_clusterings == 0 {
            bail!("K and B must be positive");
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d > self.ambient) {
            bail!("subspace dimension {d} exceeds D = {}", self.ambient);
        }
        match self.mode {
            Mode::GridNkByTheta | Mode::NoisyThetaSweep => {
                if self.thetas.is_empty() {
                    bail!("theta grid must be nonempty");
                }
                if let Some(t) = self.thetas.iter().find(|t| !(**t > 0.0 && **t <= std::f64::consts::FRAC_PI_2)) {
                    bail!("theta = {t} outside (0, pi/2]");
                }
                if self.n_subspaces != 3 {
                    bail!("angled modes use exactly K = 3 subspaces");
                }
                if let Some(&d) = self.dims.iter().find(|&&d| 3 * d > self.ambient) {
                    bail!("angled construction needs D >= 3d (d = {d}, D = {})", self.ambient);
                }
            }
            Mode::Fig1Progression if self.budgets.is_empty() || self.budgets.contains(&0) => {
                bail!("fig1 budgets must be nonempty and positive");
            }
            _ => {}
        }
        Ok(())
    }
}

/// One clustering run of the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub mode: &'static str,
    pub algorithm: &'static str,
    pub n_k: usize,
    pub d: usize,
    pub theta: Option<f64>,
    pub sigma2: f64,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub q: Option<usize>,
    pub trial: usize,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub mode: &'static str,
    pub algorithm: &'static str,
    pub n_k: usize,
    pub d: usize,
    pub theta: Option<f64>,
    pub sigma2: f64,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub trials: usize,
    pub mean_error_pct: f64,
    pub median_error_pct: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    n_k: usize,
    d: usize,
    theta: Option<f64>,
    sigma2: f64,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let thetas: Vec<Option<f64>> = if cfg.thetas.is_empty() {
        vec![None]
    } else {
        cfg.thetas.iter().copied().map(Some).collect()
    };
    let mut out = Vec::new();
    for &sigma2 in &cfg.sigma2 {
        for &theta in &thetas {
            for &d in &cfg.dims {
                for &n_k in &cfg.nk {
                    out.push(Cell { n_k, d, theta, sigma2 });
                }
            }
        }
    }
    out
}

fn instance(cfg: &ExperimentConfig, cell: Cell, seed: &SeedSpec) -> Result<ProblemInstance<f64>> {
    let counts = vec![cell.n_k; cfg.n_subspaces];
    let sigma = cell.sigma2.sqrt();
    let mut inst = match cell.theta {
        Some(theta) => gen_angled_uos(cfg.ambient, AngleSpec::new(theta, cell.d)?, &counts, sigma, seed)?,
        None => gen_random_uos(cfg.ambient, &vec![cell.d; cfg.n_subspaces], &counts, sigma, seed)?,
    };
    inst.data.normalize_columns()?;
    Ok(inst)
}

fn run_algorithm(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    inst: &ProblemInstance<f64>,
    d: usize,
    b: usize,
    q: Option<usize>,
    seed: u64,
) -> Result<f64> {
    let k = cfg.n_subspaces;
    let ens = EnsembleConfig::new(k, d, k)
        .base_clusterings(b)
        .iterations(cfg.iterations)
        .weighted(cfg.weighted)
        .threshold(q);
    let out = match alg {
        Algorithm::Ekss => ekss(&inst.data, &ens, seed)?,
        Algorithm::Ekss0 => ekss0(&inst.data, &ens, seed)?,
        Algorithm::Tsc => tsc(&inst.data, q.context("TSC requires a threshold")?, k, TscWeights::ArcCos, seed)?,
    };
    Ok(clustering_error(&out.labels, &inst.true_labels)?)
}

fn algorithm_seed(trial_seed: &SeedSpec, alg: Algorithm) -> u64 {
    trial_seed.derive(alg as u64 + 1).master_seed
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(rows: &[Row]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let key = |s: &SummaryRow| {
            s.algorithm == r.algorithm
                && s.n_k == r.n_k
                && s.d == r.d
                && s.theta == r.theta
                && s.sigma2 == r.sigma2
                && s.b == r.b
        };
        match out.iter().position(key) {
            Some(i) => errors[i].push(r.error_pct),
            None => {
                out.push(SummaryRow {
                    mode: r.mode,
                    algorithm: r.algorithm,
                    n_k: r.n_k,
                    d: r.d,
                    theta: r.theta,
                    sigma2: r.sigma2,
                    b: r.b,
                    trials: 0,
                    mean_error_pct: 0.0,
                    median_error_pct: 0.0,
                });
                errors.push(vec![r.error_pct]);
            }
        }
    }
    for (s, e) in out.iter_mut().zip(errors.iter_mut()) {
        s.trials = e.len();
        s.mean_error_pct = e.iter().sum::<f64>() / e.len() as f64;
        s.median_error_pct = median(e);
    }
    out
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the fig-1 progression: one instance per trial clustered with each
/// ensemble size. The co-association matrices of trial 0 are written as
/// `coassociation_B{b}.csv`.
fn run_fig1(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let cell = Cell {
        n_k: cfg.nk[0],
        d: cfg.dims[0],
        theta: None,
        sigma2: cfg.sigma2[0],
    };
    let k = cfg.n_subspaces;
    let jobs: Vec<(usize, usize)> = (0..cfg.trials).flat_map(|t| cfg.budgets.iter().map(move |&b| (t, b))).collect();
    let results = jobs
        .par_iter()
        .map(|&(trial, b)| -> Result<(Row, Option<nalgebra::DMatrix<f64>>)> {
            let trial_seed = SeedSpec::new(cfg.seed, trial as u64);
            let inst = instance(cfg, cell, &trial_seed)?;
            let ens = EnsembleConfig::new(k, cell.d, k)
                .base_clusterings(b)
                .iterations(cfg.iterations)
                .weighted(cfg.weighted);
            let out = ekss(&inst.data, &ens, algorithm_seed(&trial_seed, Algorithm::Ekss))?;
            let row = Row {
                mode: cfg.mode.name(),
                algorithm: Algorithm::Ekss.name(),
                n_k: cell.n_k,
                d: cell.d,
                theta: None,
                sigma2: cell.sigma2,
                b: Some(b),
                q: None,
                trial,
                error_pct: clustering_error(&out.labels, &inst.true_labels)?,
            };
            Ok((row, (trial == 0).then(|| out.coassociation.into_inner())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(results.len());
    for (row, coassoc) in results {
        if let Some(a) = coassoc {
            let b = row.b.expect("fig1 rows carry B");
            io::write_matrix(&cfg.output_dir.join(format!("coassociation_B{b}.csv")), &a)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let cells = cells(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let per_job = jobs
        .par_iter()
        .map(|&(c, trial)| -> Result<Vec<Row>> {
            let cell = cells[c];
            let trial_seed = SeedSpec::new(cfg.seed, trial as u64).derive(c as u64);
            let inst = instance(cfg, cell, &trial_seed)?;
            cfg.algorithms
                .iter()
                .map(|&alg| {
                    let q = alg.default_q(cell.n_k);
                    let b = (alg != Algorithm::Tsc).then_some(cfg.base_clusterings);
                    let error_pct = run_algorithm(
                        cfg,
                        alg,
                        &inst,
                        cell.d,
                        cfg.base_clusterings,
                        Some(q),
                        algorithm_seed(&trial_seed, alg),
                    )?;
                    Ok(Row {
                        mode: cfg.mode.name(),
                        algorithm: alg.name(),
                        n_k: cell.n_k,
                        d: cell.d,
                        theta: cell.theta,
                        sigma2: cell.sigma2,
                        b,
                        q: Some(q),
                        trial,
                        error_pct,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

/// Result of [`run_experiment`].
pub enum ExperimentOutcome {
    Table { rows: Vec<Row>, summary: Vec<SummaryRow> },
    Theory(theory::TheoryReport),
}

/// Runs the configured experiment and writes `config.json` plus
/// `results.csv`/`summary.csv` (or `theory.json`) to the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create output directory {}", cfg.output_dir.display()))?;
    let config_path = cfg.output_dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(cfg)? + "\n")
        .with_context(|| format!("cannot write {}", config_path.display()))?;
    if cfg.mode == Mode::TheorySuite {
        let report = theory::run(&TheoryConfig {
            seed: cfg.seed,
            samples: cfg.samples,
        })?;
        fs::write(cfg.output_dir.join("theory.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        return Ok(ExperimentOutcome::Theory(report));
    }
    let rows = match cfg.mode {
        Mode::Fig1Progression => run_fig1(cfg)?,
        _ => run_grid(cfg)?,
    };
    let summary = summarize(&rows);
    write_csv(&cfg.output_dir.join("results.csv"), &rows)?;
    write_csv(&cfg.output_dir.join("summary.csv"), &summary)?;
    Ok(ExperimentOutcome::Table { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overrides(mode: Mode) -> ExperimentOverrides {
        ExperimentOverrides {
            mode: Some(mode),
            ..Default::default()
        }
    }

    #[test]
    fn q_rules() {
        assert_eq!(Algorithm::Ekss.default_q(500), 84);
        assert_eq!(Algorithm::Tsc.default_q(500), 25);
        assert_eq!(Algorithm::Ekss0.default_q(10), 3);
        assert_eq!(Algorithm::Ekss.default_q(10), 3);
    }

    #[test]
    fn spacing() {
        let log = spaced(0.001, 0.8, 20, Spacing::Log);
        assert_eq!(log.len(), 20);
        assert!((log[0] - 0.001).abs() < 1e-15 && (log[19] - 0.8).abs() < 1e-12);
        assert!((log[1] / log[0] - log[19] / log[18]).abs() < 1e-9);
        let lin = spaced(0.0, 1.0, 5, Spacing::Linear);
        assert_eq!(lin, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn mode_defaults() {
        let f = ExperimentConfig::resolve(overrides(Mode::Fig1Progression)).unwrap();
        assert_eq!((f.ambient, f.n_subspaces, f.nk[0], f.dims[0]), (100, 4, 100, 3));
        assert_eq!(f.budgets, vec![1, 5, 50]);
        let n = ExperimentConfig::resolve(overrides(Mode::NoisyThetaSweep)).unwrap();
        assert_eq!(n.thetas.len(), 20);
        assert_eq!(n.sigma2, vec![0.05]);
        let g = ExperimentConfig::resolve(overrides(Mode::GridNkByD)).unwrap();
        assert_eq!(g.nk.len() * g.dims.len(), 64);
        assert!(g.thetas.is_empty());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ExperimentConfig::resolve(ExperimentOverrides::default()).is_err());
        let mut o = overrides(Mode::GridNkByD);
        o.trials = Some(0);
        assert!(ExperimentConfig::resolve(o).is_err());
        let mut o = overrides(Mode::GridNkByTheta);
        o.dims = Some(vec![40]);
        assert!(ExperimentConfig::resolve(o).is_err());
        let mut o = overrides(Mode::GridNkByD);
        o.nk = Some(vec![]);
        assert!(ExperimentConfig::resolve(o).is_err());
    }

    #[test]
    fn overrides_merge_and_parse() {
        let file: ExperimentOverrides =
            serde_json::from_str(r#"{"mode": "grid_Nk_by_theta", "trials": 2, "algorithms": ["tsc"]}"#).unwrap();
        let flags = ExperimentOverrides {
            trials: Some(4),
            ..Default::default()
        };
        let m = file.merge(flags);
        assert_eq!(m.mode, Some(Mode::GridNkByTheta));
        assert_eq!(m.trials, Some(4));
        assert_eq!(m.algorithms, Some(vec![Algorithm::Tsc]));
        assert!(serde_json::from_str::<ExperimentOverrides>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn summary_groups_trials() {
        let row = |trial, error_pct| Row {
            mode: "m",
            algorithm: "ekss",
            n_k: 10,
            d: 2,
            theta: None,
            sigma2: 0.0,
            b: Some(5),
            q: Some(3),
            trial,
            error_pct,
        };
        let s = summarize(&[row(0, 10.0), row(1, 20.0), row(2, 60.0)]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].trials, 3);
        assert!((s[0].mean_error_pct - 30.0).abs() < 1e-12);
        assert_eq!(s[0].median_error_pct, 20.0);
    }
}
