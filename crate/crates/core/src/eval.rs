//! Evaluation: clustering error under optimal label matching, no-false-
//! connection checks, q-angular separation, subspace affinity, the
//! masked-basis ratio and Monte-Carlo estimates of the co-cluster
//! probability of EKSS-0.

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orthonormality_defect, DataMatrix, SeedSpec, SubspaceBasis};
use crate::kss::Labeling;
use crate::scalar::Real;
use crate::spectral::connected_components;

/// Default cap on the number of masks enumerated by [`masked_ratio`].
pub const MASK_BUDGET: u128 = 1_000_000;

/// Maximum-weight perfect matching on a square integer matrix (Hungarian
/// method with potentials). Returns `assignment[row] = column`.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    // Minimize negated weights; 1-based arrays with a virtual column 0.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Contingency table `counts[out][truth]`, padded to a square.
fn contingency(out: &Labeling, truth: &Labeling) -> Vec<Vec<i64>> {
    let size = out.n_clusters().max(truth.n_clusters()).max(1);
    let mut c = vec![vec![0i64; size]; size];
    for (&a, &b) in out.as_slice().iter().zip(truth.as_slice()) {
        c[a][b] += 1;
    }
    c
}

/// Percentage of points misclassified under the best one-to-one matching of
/// output clusters to true clusters.
pub fn clustering_error(out: &Labeling, truth: &Labeling) -> Result<f64> {
    if out.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: out.len(),
        });
    }
    let n = truth.len();
    if n == 0 {
        return Ok(0.0);
    }
    let c = contingency(out, truth);
    let matched: i64 = max_weight_assignment(&c).iter().enumerate().map(|(r, &col)| c[r][col]).sum();
    Ok(100.0 * (n as i64 - matched) as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfcReport {
    pub holds: bool,
    /// Pairs `(i, j)`, `i < j`, joined by a nonzero entry across true clusters.
    pub violations: Vec<(usize, usize)>,
}

/// No-false-connections check of an affinity against ground truth.
pub fn nfc_check<T: Real>(a: &DMatrix<T>, truth: &Labeling) -> Result<NfcReport> {
    let n = truth.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: a.nrows().max(a.ncols()),
        });
    }
    let mut violations = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if truth.get(i) != truth.get(j) && (a[(i, j)] != T::zero() || a[(j, i)] != T::zero()) {
                violations.push((i, j));
            }
        }
    }
    Ok(NfcReport {
        holds: violations.is_empty(),
        violations,
    })
}

/// q-angular separation: the minimum over points of half the gap between
/// `f` of the q-th largest within-cluster absolute inner product and `f` of
/// the largest cross-cluster absolute inner product.
pub fn angular_separation<T: Real, F: Fn(T) -> T>(
    data: &DataMatrix<T>,
    truth: &Labeling,
    q: usize,
    f: F,
) -> Result<T> {
    let n = data.n_points();
    if truth.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: truth.len(),
        });
    }
    let sizes: Vec<usize> = truth.counts(0).into_iter().filter(|&c| c > 0).collect();
    if sizes.len() < 2 {
        return Err(Error::InvalidParameter("angular separation needs at least two clusters".into()));
    }
    let min_size = *sizes.iter().min().expect("nonempty");
    if q == 0 || q >= min_size {
        return Err(Error::InvalidParameter(format!(
            "q = {q} must satisfy 1 <= q < smallest cluster size {min_size}"
        )));
    }
    let gram = data.values().tr_mul(data.values());
    let half = T::lit(0.5);
    let mut best: Option<T> = None;
    let mut within = Vec::with_capacity(n);
    for i in 0..n {
        within.clear();
        let mut cross = T::zero();
        for j in 0..n {
            if j == i {
                continue;
            }
            let g = gram[(i, j)].abs();
            if truth.get(j) == truth.get(i) {
                within.push(g);
            } else if g > cross {
                cross = g;
            }
        }
        within.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let gap = (f(within[q - 1]) - f(cross)) * half;
        if best.is_none_or(|b| gap < b) {
            best = Some(gap);
        }
    }
    Ok(best.expect("n >= 2"))
}

/// Subspace affinity `‖U_kᵀU_l‖_F / sqrt(min(d_k, d_l))` of two orthonormal
/// bases.
pub fn subspace_affinity<T: Real>(u: &DMatrix<T>, v: &DMatrix<T>) -> Result<T> {
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            found: v.nrows(),
        });
    }
    for m in [u, v] {
        let defect = orthonormality_defect(m);
        if m.ncols() == 0 || defect.is_nan() || defect > T::ORTHO_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
    }
    let d = T::lit(u.ncols().min(v.ncols()) as f64);
    Ok(u.tr_mul(v).norm() / d.sqrt())
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

// Calls `visit` with every subset of 0..n of size `size`, in lexicographic order.
fn for_each_combination(n: usize, size: usize, mut visit: impl FnMut(&[usize])) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
            return;
        };
        idx[i] += 1;
        for j in (i + 1)..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn singular_extremes<T: Real>(m: DMatrix<T>) -> (T, T) {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let min = sv.iter().copied().fold(max, |a, b| a.min(b));
    (max, min)
}

/// Masked-basis ratio: the largest cross-subspace spectral norm
/// `‖U_𝒟^{(k)ᵀ} U^{(l)}‖₂` (`k != l`) over the smallest
/// `σ_min(U_𝒟^{(l)ᵀ} U^{(l)})`, both taken over every row mask `𝒟` with
/// `|𝒟| <= 2s`. `U_𝒟` is `U` with the rows in `𝒟` zeroed.
///
/// Fails when `C(D, 2s)` exceeds `budget`.
pub fn masked_ratio<T: Real>(bases: &[SubspaceBasis<T>], s: usize, budget: u128) -> Result<f64> {
    if bases.len() < 2 {
        return Err(Error::InvalidParameter("masked ratio needs at least two bases".into()));
    }
    let ambient = bases[0].ambient_dim();
    if let Some(b) = bases.iter().find(|b| b.ambient_dim() != ambient) {
        return Err(Error::DimensionMismatch {
            expected: ambient,
            found: b.ambient_dim(),
        });
    }
    let max_mask = (2 * s).min(ambient);
    let count = binomial(ambient, max_mask);
    if count > budget {
        return Err(Error::BudgetExceeded(format!(
            "C({ambient}, {max_mask}) = {count} masks exceeds {budget}; reduce s or D"
        )));
    }
    let mut numerator = T::zero();
    let mut denominator: Option<T> = None;
    let mut masked: Vec<DMatrix<T>> = bases.iter().map(|b| b.matrix().clone()).collect();
    for size in 0..=max_mask {
        for_each_combination(ambient, size, |rows| {
            for (m, b) in masked.iter_mut().zip(bases) {
                m.copy_from(b.matrix());
                for &r in rows {
                    m.row_mut(r).fill(T::zero());
                }
            }
            for (k, mk) in masked.iter().enumerate() {
                for (l, bl) in bases.iter().enumerate() {
                    let (hi, lo) = singular_extremes(mk.tr_mul(bl.matrix()));
                    if k != l {
                        numerator = numerator.max(hi);
                    } else if denominator.is_none_or(|d| lo < d) {
                        denominator = Some(lo);
                    }
                }
            }
        });
    }
    let den = denominator.expect("at least the empty mask").as_f64();
    let num = numerator.as_f64();
    Ok(if den == 0.0 { f64::INFINITY } else { num / den })
}

/// Monte-Carlo estimate of the EKSS-0 co-cluster probability of two unit
/// points at angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoClusterEstimate {
    pub theta: f64,
    pub probability: f64,
    /// Binomial standard error `sqrt(p (1 - p) / B)`.
    pub stderr: f64,
    pub samples: u64,
}

const ESTIMATE_CHUNK: u64 = 8192;

/// Estimates the probability that `e₁` and `cos θ e₁ + sin θ e₂` are assigned
/// to the same candidate when `K̄` candidates are drawn uniformly from
/// `St(D, d̄)`. Each chunk of samples draws from its own derived stream, so
/// the estimate does not depend on the thread count.
pub fn estimate_f(
    theta: f64,
    n_candidates: usize,
    candidate_dim: usize,
    ambient: usize,
    samples: u64,
    seed: &SeedSpec,
) -> Result<CoClusterEstimate> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta = {theta} outside [0, pi/2]")));
    }
    if ambient < 2 || candidate_dim == 0 || candidate_dim > ambient || n_candidates == 0 {
        return Err(Error::InvalidDimension(format!(
            "need D >= 2, 1 <= d <= D and K >= 1 (got D = {ambient}, d = {candidate_dim}, K = {n_candidates})"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    let (c, s) = (theta.cos(), theta.sin());
    let chunks = samples.div_ceil(ESTIMATE_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = ESTIMATE_CHUNK.min(samples - chunk * ESTIMATE_CHUNK);
            let mut rng = seed.derive(chunk).rng();
            let mut sampler = CandidateSampler::new(ambient, candidate_dim);
            (0..len)
                .filter(|_| sampler.co_clustered(n_candidates, c, s, &mut rng))
                .count() as u64
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(CoClusterEstimate {
        theta,
        probability: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}

// Draws candidate bases column by column with modified Gram-Schmidt, which
// produces the same uniform Stiefel law as QR with a positive diagonal.
struct CandidateSampler {
    ambient: usize,
    dim: usize,
    buf: Vec<f64>,
}

impl CandidateSampler {
    fn new(ambient: usize, dim: usize) -> Self {
        Self {
            ambient,
            dim,
            buf: vec![0.0; ambient * dim],
        }
    }

    // Squared projection energies of e1 and (c, s, 0, ...) on a fresh basis.
    fn draw_energies<R: Rng + ?Sized>(&mut self, c: f64, s: f64, rng: &mut R) -> (f64, f64) {
        let d = self.ambient;
        for v in self.buf.iter_mut() {
            *v = rng.sample(rand_distr::StandardNormal);
        }
        let (mut ei, mut ej) = (0.0, 0.0);
        for col in 0..self.dim {
            let (done, rest) = self.buf.split_at_mut(col * d);
            let cur = &mut rest[..d];
            for p in 0..col {
                let prev = &done[p * d..(p + 1) * d];
                let dot: f64 = prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
                for (x, y) in cur.iter_mut().zip(prev) {
                    *x -= dot * y;
                }
            }
            let norm = cur.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in cur.iter_mut() {
                *x /= norm;
            }
            ei += cur[0] * cur[0];
            let pj = c * cur[0] + s * cur[1];
            ej += pj * pj;
        }
        (ei, ej)
    }

    fn co_clustered<R: Rng + ?Sized>(&mut self, k: usize, c: f64, s: f64, rng: &mut R) -> bool {
        let (mut best_i, mut best_j) = (0usize, 0usize);
        let (mut top_i, mut top_j) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for cand in 0..k {
            let (ei, ej) = self.draw_energies(c, s, rng);
            if ei > top_i {
                top_i = ei;
                best_i = cand;
            }
            if ej > top_j {
                top_j = ej;
                best_j = cand;
            }
        }
        best_i == best_j
    }
}

/// Metrics of one clustering against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clustering_error_pct: f64,
    /// Present when an affinity matrix was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nfc: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_components: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nfc_violations: Option<usize>,
    /// Present when data and `q` were supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_q: Option<f64>,
    /// Present when true bases were supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairwise_aff: Option<Vec<Vec<f64>>>,
}

impl MetricReport {
    pub fn compute<T: Real>(
        out: &Labeling,
        truth: &Labeling,
        affinity: Option<DMatrixView<'_, T>>,
        separation: Option<(&DataMatrix<T>, usize)>,
        bases: Option<&[SubspaceBasis<T>]>,
    ) -> Result<Self> {
        let clustering_error_pct = clustering_error(out, truth)?;
        let (nfc, nfc_violations, num_components) = match affinity {
            Some(a) => {
                let a = a.into_owned();
                let report = nfc_check(&a, truth)?;
                let (_, count) = connected_components(&a, T::zero());
                (Some(report.holds), Some(report.violations.len()), Some(count))
            }
            None => (None, None, None),
        };
        let phi_q = match separation {
            Some((data, q)) => Some(angular_separation(data, truth, q, |x| x)?.as_f64()),
            None => None,
        };
        let pairwise_aff = match bases {
            Some(bases) => {
                let mut rows = Vec::with_capacity(bases.len());
                for u in bases {
                    let mut row = Vec::with_capacity(bases.len());
                    for v in bases {
                        row.push(subspace_affinity(u.matrix(), v.matrix())?.as_f64());
                    }
                    rows.push(row);
                }
                Some(rows)
            }
            None => None,
        };
        Ok(Self {
            clustering_error_pct,
            nfc,
            num_components,
            nfc_violations,
            phi_q,
            pairwise_aff,
        })
    }
}
