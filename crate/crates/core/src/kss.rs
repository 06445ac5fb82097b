//! K-subspaces base clusterer: cluster-by-projection, PCA refits, the
//! residual cost and the cost-derived quality weight.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pca_basis, sample_stiefel_from, DataMatrix, SeedSpec, SubspaceBasis};
use crate::scalar::Real;

/// Cluster id per point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling {
    assignments: Vec<usize>,
}

impl Labeling {
    pub fn new(assignments: Vec<usize>) -> Self {
        Self { assignments }
    }

    /// Builds a labeling and checks every id is below `n_clusters`.
    pub fn with_range(assignments: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if let Some(&bad) = assignments.iter().find(|&&a| a >= n_clusters) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} out of range for {n_clusters} clusters"
            )));
        }
        Ok(Self { assignments })
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assignments
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.assignments
    }

    pub fn get(&self, i: usize) -> usize {
        self.assignments[i]
    }

    /// One more than the largest id (0 for an empty labeling).
    pub fn n_clusters(&self) -> usize {
        self.assignments.iter().max().map_or(0, |m| m + 1)
    }

    /// Point indices of each cluster `0..n_clusters`, in increasing order.
    pub fn members(&self, n_clusters: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_clusters.max(self.n_clusters())];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn counts(&self, n_clusters: usize) -> Vec<usize> {
        let mut out = vec![0; n_clusters.max(self.n_clusters())];
        for &c in &self.assignments {
            out[c] += 1;
        }
        out
    }

    /// Relabels clusters in order of first appearance.
    pub fn canonical(&self) -> Self {
        let mut map = vec![usize::MAX; self.n_clusters()];
        let mut next = 0;
        let assignments = self
            .assignments
            .iter()
            .map(|&c| {
                if map[c] == usize::MAX {
                    map[c] = next;
                    next += 1;
                }
                map[c]
            })
            .collect();
        Self { assignments }
    }

    /// New label `j` is old label `perm[j]` (reorders points).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            assignments: perm.iter().map(|&p| self.assignments[p]).collect(),
        }
    }
}

impl From<Vec<usize>> for Labeling {
    fn from(v: Vec<usize>) -> Self {
        Self::new(v)
    }
}

/// What to do with a candidate that received no points before a PCA refit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyClusterPolicy {
    /// Replace the candidate with a fresh uniform random basis.
    #[default]
    Redraw,
    /// Move the point with the largest residual (from a cluster with more
    /// than one point) into the empty cluster.
    StealFarthest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KssConfig {
    /// Number of candidate subspaces `K̄`.
    pub n_candidates: usize,
    /// Candidate dimension `d̄`.
    pub candidate_dim: usize,
    /// Alternation count `T`; 0 means assignment to random candidates only.
    pub iterations: usize,
    pub empty_policy: EmptyClusterPolicy,
}

impl KssConfig {
    pub fn new(n_candidates: usize, candidate_dim: usize) -> Self {
        Self {
            n_candidates,
            candidate_dim,
            iterations: 3,
            empty_policy: EmptyClusterPolicy::Redraw,
        }
    }

    pub fn iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn empty_policy(mut self, policy: EmptyClusterPolicy) -> Self {
        self.empty_policy = policy;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KssResult<T: Real> {
    pub labels: Labeling,
    /// Bases used for the final assignment.
    pub bases: Vec<SubspaceBasis<T>>,
    /// Residual cost of `labels` against `bases`.
    pub cost: T,
    /// `1 - cost / ‖X‖_F²`.
    pub weight: T,
    /// Cost after the initial assignment and after each alternation.
    pub cost_trace: Vec<T>,
    /// Number of empty-cluster repairs performed.
    pub empty_events: usize,
}

fn check_bases<T: Real>(data: &DataMatrix<T>, bases: &[SubspaceBasis<T>]) -> Result<()> {
    if bases.is_empty() {
        return Err(Error::InvalidParameter("at least one candidate basis is required".into()));
    }
    for b in bases {
        if b.ambient_dim() != data.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: data.ambient_dim(),
                found: b.ambient_dim(),
            });
        }
    }
    Ok(())
}

// Squared projection energies, one row per basis.
fn energies<T: Real>(data: &DataMatrix<T>, bases: &[SubspaceBasis<T>]) -> DMatrix<T> {
    let mut out = DMatrix::<T>::zeros(bases.len(), data.n_points());
    for (k, b) in bases.iter().enumerate() {
        let coeffs = b.matrix().tr_mul(data.values());
        for (j, col) in coeffs.column_iter().enumerate() {
            out[(k, j)] = col.norm_squared();
        }
    }
    out
}

/// Assigns each point to the basis with the largest projection energy;
/// ties go to the lowest index.
pub fn assign_by_projection<T: Real>(data: &DataMatrix<T>, bases: &[SubspaceBasis<T>]) -> Result<Labeling> {
    check_bases(data, bases)?;
    Ok(assign_scored(data, bases).0)
}

// Assignment plus the total captured energy `Σ_j ‖U_{c(j)}ᵀ x_j‖²`.
fn assign_scored<T: Real>(data: &DataMatrix<T>, bases: &[SubspaceBasis<T>]) -> (Labeling, T) {
    let e = energies(data, bases);
    let mut captured = T::zero();
    let assignments = (0..data.n_points())
        .map(|j| {
            let mut best = 0;
            for k in 1..bases.len() {
                if e[(k, j)] > e[(best, j)] {
                    best = k;
                }
            }
            captured += e[(best, j)];
            best
        })
        .collect();
    (Labeling::new(assignments), captured)
}

/// Sum of squared residuals of each point to its assigned basis.
pub fn kss_cost<T: Real>(data: &DataMatrix<T>, labels: &Labeling, bases: &[SubspaceBasis<T>]) -> Result<T> {
    check_bases(data, bases)?;
    if labels.len() != data.n_points() {
        return Err(Error::LengthMismatch {
            expected: data.n_points(),
            found: labels.len(),
        });
    }
    let mut total = T::zero();
    for (j, &k) in labels.as_slice().iter().enumerate() {
        let basis = bases.get(k).ok_or_else(|| {
            Error::InvalidParameter(format!("label {k} has no basis ({} given)", bases.len()))
        })?;
        total += basis.residual(data.point(j)).norm_squared();
    }
    Ok(total)
}

fn weight_from_cost<T: Real>(cost: T, frob_sq: T) -> T {
    let w = T::one() - cost / frob_sq;
    w.clamp(T::zero(), T::one())
}

/// Clustering-quality weight `1 - cost / ‖X‖_F²`.
pub fn kss_weight<T: Real>(data: &DataMatrix<T>, result: &KssResult<T>) -> Result<T> {
    let frob = data.frobenius_norm_sq();
    if frob == T::zero() {
        return Err(Error::InvalidParameter("data matrix is identically zero".into()));
    }
    Ok(weight_from_cost(result.cost, frob))
}

/// One KSS run drawing all randomness from `seed`'s stream.
pub fn run_kss<T: Real>(data: &DataMatrix<T>, cfg: &KssConfig, seed: &SeedSpec) -> Result<KssResult<T>> {
    run_kss_with_rng(data, cfg, &mut seed.rng())
}

/// One KSS run: draw `K̄` random bases, assign by projection, then `T` times
/// refit each cluster by PCA and reassign.
pub fn run_kss_with_rng<T: Real, R: Rng + ?Sized>(
    data: &DataMatrix<T>,
    cfg: &KssConfig,
    rng: &mut R,
) -> Result<KssResult<T>> {
    if cfg.n_candidates == 0 {
        return Err(Error::InvalidParameter("K̄ must be at least 1".into()));
    }
    let ambient = data.ambient_dim();
    let mut bases = (0..cfg.n_candidates)
        .map(|_| sample_stiefel_from(ambient, cfg.candidate_dim, rng))
        .collect::<Result<Vec<_>>>()?;
    check_bases(data, &bases)?;
    // Residual energy is ‖X‖_F² minus the captured energy.
    let frob = data.frobenius_norm_sq();
    let cost_of = |captured: T| (frob - captured).max(T::zero());
    let (mut labels, captured) = assign_scored(data, &bases);
    let mut cost_trace = vec![cost_of(captured)];
    let mut empty_events = 0;

    for _ in 0..cfg.iterations {
        let mut members = labels.members(cfg.n_candidates);
        if cfg.empty_policy == EmptyClusterPolicy::StealFarthest {
            empty_events += steal_for_empty(data, &bases, &mut labels, &mut members);
        }
        for (k, idx) in members.iter().enumerate() {
            bases[k] = if idx.is_empty() {
                empty_events += 1;
                sample_stiefel_from(ambient, cfg.candidate_dim, rng)?
            } else {
                pca_basis(&data.select_columns(idx), cfg.candidate_dim, rng)?
            };
        }
        let (next, captured) = assign_scored(data, &bases);
        labels = next;
        cost_trace.push(cost_of(captured));
    }

    let cost = *cost_trace.last().expect("trace holds the initial cost");
    let weight = if frob == T::zero() {
        T::one()
    } else {
        weight_from_cost(cost, frob)
    };
    Ok(KssResult {
        labels,
        bases,
        cost,
        weight,
        cost_trace,
        empty_events,
    })
}

fn steal_for_empty<T: Real>(
    data: &DataMatrix<T>,
    bases: &[SubspaceBasis<T>],
    labels: &mut Labeling,
    members: &mut [Vec<usize>],
) -> usize {
    let mut events = 0;
    for k in 0..members.len() {
        if !members[k].is_empty() {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for (j, &c) in labels.as_slice().iter().enumerate() {
            if members[c].len() < 2 {
                continue;
            }
            let r = bases[c].residual(data.point(j)).norm_squared();
            if best.is_none_or(|(_, br)| r > br) {
                best = Some((j, r));
            }
        }
        if let Some((j, _)) = best {
            let from = labels.get(j);
            members[from].retain(|&i| i != j);
            members[k].push(j);
            labels.assignments[j] = k;
            events += 1;
        }
    }
    events
}
