//! Statistical checks of the co-cluster probability of EKSS-0 and of
//! spectral recovery on block affinities. Each check reports its measured
//! statistics next to a pass flag.

use std::f64::consts::{FRAC_PI_2, PI};

use anyhow::Result;
use ekss::{
    clustering_error, ekss_coassociation, estimate_f, spectral_cluster, CoAssociationMatrix, DataMatrix,
    EnsembleConfig, Labeling, SeedSpec, SpectralConfig,
};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_SAMPLES: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub seed: u64,
    /// Monte-Carlo samples per probability estimate. The concentration
    /// reference uses ten times as many.
    pub samples: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub stats: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub samples: u64,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

// Stream ids partition the seed among checks.
const MONOTONE_STREAM: u64 = 1 << 32;
const CLOSED_FORM_STREAM: u64 = 2 << 32;
const CONCENTRATION_STREAM: u64 = 3 << 32;
const BLOCK_STREAM: u64 = 4 << 32;

/// Adjacent estimates on an 8-angle grid may increase by at most three
/// combined standard errors.
pub fn monotonicity(cfg: &TheoryConfig) -> Result<CheckResult> {
    let grid: Vec<f64> = (0..8).map(|i| 0.05 + i as f64 * (FRAC_PI_2 - 0.05) / 7.0).collect();
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    let mut curves = Vec::new();
    for (c, (k, d)) in [(2usize, 1usize), (4, 3), (3, 5)].into_iter().enumerate() {
        let est = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let stream = MONOTONE_STREAM + (c * grid.len() + i) as u64;
                estimate_f(t, k, d, 20, cfg.samples, &SeedSpec::new(cfg.seed, stream))
            })
            .collect::<ekss::Result<Vec<_>>>()?;
        for w in est.windows(2) {
            let slack = 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            let excess = w[1].probability - w[0].probability - slack;
            worst = worst.max(excess);
            pass &= excess <= 0.0;
        }
        curves.push(json!({
            "Kbar": k,
            "dbar": d,
            "probability": est.iter().map(|e| e.probability).collect::<Vec<_>>(),
        }));
    }
    Ok(CheckResult {
        name: "monotonicity".into(),
        pass,
        stats: json!({ "ambient": 20, "thetas": grid, "curves": curves, "max_excess": worst }),
    })
}

/// Two random lines in the plane co-cluster two points at angle `θ` with
/// probability `1 - 2θ/π`.
pub fn closed_form(cfg: &TheoryConfig) -> Result<CheckResult> {
    let mut pass = true;
    let (mut max_abs, mut max_z, mut stderr_at_max) = (0.0f64, 0.0f64, 0.0f64);
    for (i, theta) in [0.2, 0.6, 1.0, 1.4].into_iter().enumerate() {
        let est = estimate_f(theta, 2, 1, 2, cfg.samples, &SeedSpec::new(cfg.seed, CLOSED_FORM_STREAM + i as u64))?;
        let diff = (est.probability - (1.0 - 2.0 * theta / PI)).abs();
        pass &= diff <= 3.0 * est.stderr;
        if diff > max_abs {
            max_abs = diff;
            stderr_at_max = est.stderr;
        }
        max_z = max_z.max(diff / est.stderr);
    }
    Ok(CheckResult {
        name: "closed_form".into(),
        pass,
        stats: json!({ "max_abs_error": max_abs, "stderr": stderr_at_max, "max_z": max_z }),
    })
}

/// The worst-pair deviation of EKSS-0 co-association from the co-cluster
/// probability decays like `B^{-1/2}`.
pub fn concentration(cfg: &TheoryConfig) -> Result<CheckResult> {
    let n = 20;
    let mut rng = SeedSpec::new(cfg.seed, CONCENTRATION_STREAM).rng();
    let raw = DMatrix::<f64>::from_fn(3, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let data = DataMatrix::new(raw)?.normalized()?;
    let gram = data.values().tr_mul(data.values());
    let reference_samples = cfg.samples * 10;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let theta = gram[(i, j)].abs().min(1.0).acos();
            let stream = SeedSpec::new(cfg.seed, CONCENTRATION_STREAM + 1 + pairs.len() as u64);
            let f = estimate_f(theta, 2, 1, 3, reference_samples, &stream)?;
            pairs.push((i, j, f.probability));
        }
    }
    let budgets = [100usize, 1_000, 10_000];
    let replicates = 20u64;
    let mut devs = Vec::new();
    for (bi, &b) in budgets.iter().enumerate() {
        let ens = EnsembleConfig::new(2, 1, 2).base_clusterings(b).iterations(0);
        let mut total = 0.0;
        for r in 0..replicates {
            let seed = SeedSpec::new(cfg.seed, CONCENTRATION_STREAM).derive(bi as u64 * replicates + r);
            let a = ekss_coassociation(&data, &ens, seed.master_seed)?;
            total += pairs.iter().map(|&(i, j, f)| (a.get(i, j) - f).abs()).fold(0.0, f64::max);
        }
        devs.push(total / replicates as f64);
    }
    let xs: Vec<f64> = budgets.iter().map(|&b| (b as f64).ln()).collect();
    let ys: Vec<f64> = devs.iter().map(|d| d.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    Ok(CheckResult {
        name: "concentration".into(),
        pass: (-0.65..=-0.35).contains(&slope),
        stats: json!({
            "budgets": budgets,
            "mean_max_deviation": devs,
            "slope": slope,
            "reference_samples": reference_samples,
        }),
    })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Spectral clustering recovers the blocks of 50 random block-diagonal
/// affinities with shuffled rows.
pub fn block_recovery(cfg: &TheoryConfig) -> Result<CheckResult> {
    let mut rng = SeedSpec::new(cfg.seed, BLOCK_STREAM).rng();
    let mut failures = 0;
    for case in 0..50u64 {
        let k = rng.random_range(1..=5usize);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(2..=12usize)).collect();
        let mut truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
        truth.shuffle(&mut rng);
        let n = truth.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if truth[i] == truth[j] {
                    let w = rng.random_range(0.05..1.0);
                    a[(i, j)] = w;
                    a[(j, i)] = w;
                }
            }
        }
        let aff = CoAssociationMatrix::from_matrix(a, true)?;
        let spec = SpectralConfig::new(k, SeedSpec::new(cfg.seed, BLOCK_STREAM + 1 + case));
        let labels = spectral_cluster(&aff, &spec)?;
        if clustering_error(&labels, &Labeling::new(truth))? != 0.0 {
            failures += 1;
        }
    }
    Ok(CheckResult {
        name: "block_recovery".into(),
        pass: failures == 0,
        stats: json!({ "cases": 50, "failures": failures }),
    })
}

pub fn run(cfg: &TheoryConfig) -> Result<TheoryReport> {
    let checks = vec![monotonicity(cfg)?, closed_form(cfg)?, concentration(cfg)?, block_recovery(cfg)?];
    Ok(TheoryReport {
        seed: cfg.seed,
        samples: cfg.samples,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let xs: Vec<f64> = [10.0f64, 100.0, 1000.0].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        assert!((least_squares_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn quick_checks_pass() {
        let cfg = TheoryConfig { seed: 3, samples: 20_000 };
        assert!(closed_form(&cfg).unwrap().pass);
        assert!(block_recovery(&cfg).unwrap().pass);
    }
}
