//! Spectral clustering of affinity matrices and connected-component analysis.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::CoAssociationMatrix;
use crate::error::{Error, Result};
use crate::geometry::SeedSpec;
use crate::kss::Labeling;
use crate::scalar::Real;

/// Degree assigned to isolated vertices.
const ISOLATED_DEGREE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laplacian {
    /// `I - D^{-1/2} A D^{-1/2}` with row-normalized embedding.
    #[default]
    SymmetricNormalized,
    /// `D - A`, embedding used as is.
    Unnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub n_clusters: usize,
    pub kmeans_restarts: usize,
    pub kmeans_iters: usize,
    pub seed: SeedSpec,
    pub laplacian: Laplacian,
}

impl SpectralConfig {
    pub fn new(n_clusters: usize, seed: SeedSpec) -> Self {
        Self {
            n_clusters,
            kmeans_restarts: 20,
            kmeans_iters: 100,
            seed,
            laplacian: Laplacian::SymmetricNormalized,
        }
    }
}

/// Clusters the vertices of `affinity` into `cfg.n_clusters` groups. The
/// diagonal of the affinity is ignored.
pub fn spectral_cluster<T: Real>(affinity: &CoAssociationMatrix<T>, cfg: &SpectralConfig) -> Result<Labeling> {
    let n = affinity.n();
    let k = cfg.n_clusters;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("K = {k} must be in 1..={n}")));
    }
    if cfg.kmeans_restarts == 0 {
        return Err(Error::InvalidParameter("k-means needs at least one restart".into()));
    }
    if k == 1 {
        return Ok(Labeling::new(vec![0; n]));
    }
    let mut a = affinity.values().clone();
    a.fill_diagonal(T::zero());
    let degree: Vec<T> = a
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > T::zero() { d } else { T::lit(ISOLATED_DEGREE) }
        })
        .collect();

    let embedding = match cfg.laplacian {
        Laplacian::SymmetricNormalized => {
            let inv_sqrt: Vec<T> = degree.iter().map(|d| T::one() / d.sqrt()).collect();
            let m = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
            // Smallest eigenvalues of I - M are the largest of M.
            let mut emb = extreme_eigenvectors(m, k, true);
            normalize_rows(&mut emb);
            emb
        }
        Laplacian::Unnormalized => {
            let mut l = -a;
            for i in 0..n {
                l[(i, i)] = if degree[i] > T::lit(ISOLATED_DEGREE) { degree[i] } else { T::zero() };
            }
            extreme_eigenvectors(l, k, false)
        }
    };

    let points = embedding.transpose();
    let mut rng = cfg.seed.rng();
    Ok(kmeans(&points, k, cfg.kmeans_restarts, cfg.kmeans_iters, &mut rng).canonical())
}

// `n x k` matrix of eigenvectors for the k largest (or smallest) eigenvalues,
// each sign-fixed.
fn extreme_eigenvectors<T: Real>(m: DMatrix<T>, k: usize, largest: bool) -> DMatrix<T> {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        let (ex, ey) = (eig.eigenvalues[x], eig.eigenvalues[y]);
        let o = if largest { ey.partial_cmp(&ex) } else { ex.partial_cmp(&ey) };
        o.unwrap_or(std::cmp::Ordering::Equal).then(x.cmp(&y))
    });
    let cols: Vec<_> = order[..k]
        .iter()
        .map(|&i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            crate::geometry::fix_sign(&mut v);
            v
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn normalize_rows<T: Real>(m: &mut DMatrix<T>) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > T::zero() {
            row.unscale_mut(norm);
        }
    }
}

fn sq_dist<T: Real>(points: &DMatrix<T>, j: usize, centers: &DMatrix<T>, c: usize) -> T {
    let mut s = T::zero();
    for r in 0..points.nrows() {
        let d = points[(r, j)] - centers[(r, c)];
        s += d * d;
    }
    s
}

/// Lloyd's k-means on the columns of `points` with greedy farthest-point
/// seeding; the restart with the smallest within-cluster sum of squares wins.
pub(crate) fn kmeans<T: Real, R: Rng + ?Sized>(
    points: &DMatrix<T>,
    k: usize,
    restarts: usize,
    max_iters: usize,
    rng: &mut R,
) -> Labeling {
    let n = points.ncols();
    let mut best: Option<(T, Vec<usize>)> = None;
    for _ in 0..restarts {
        let first = rng.random_range(0..n);
        let mut centers = farthest_point_seeds(points, k, first);
        let mut assign = vec![0usize; n];
        for iter in 0..max_iters.max(1) {
            let mut changed = false;
            for (j, slot) in assign.iter_mut().enumerate() {
                let mut c_best = 0;
                let mut d_best = sq_dist(points, j, &centers, 0);
                for c in 1..k {
                    let d = sq_dist(points, j, &centers, c);
                    if d < d_best {
                        d_best = d;
                        c_best = c;
                    }
                }
                if *slot != c_best {
                    *slot = c_best;
                    changed = true;
                }
            }
            if iter > 0 && !changed {
                break;
            }
            update_centers(points, &assign, &mut centers);
        }
        let wcss = (0..n).fold(T::zero(), |acc, j| acc + sq_dist(points, j, &centers, assign[j]));
        if best.as_ref().is_none_or(|(b, _)| wcss < *b) {
            best = Some((wcss, assign));
        }
    }
    Labeling::new(best.expect("at least one restart").1)
}

fn farthest_point_seeds<T: Real>(points: &DMatrix<T>, k: usize, first: usize) -> DMatrix<T> {
    let (dim, n) = points.shape();
    let mut centers = DMatrix::<T>::zeros(dim, k);
    centers.set_column(0, &points.column(first));
    let mut min_d: Vec<T> = (0..n).map(|j| sq_dist(points, j, &centers, 0)).collect();
    for c in 1..k {
        let mut pick = 0;
        for j in 1..n {
            if min_d[j] > min_d[pick] {
                pick = j;
            }
        }
        centers.set_column(c, &points.column(pick));
        for (j, m) in min_d.iter_mut().enumerate() {
            let d = sq_dist(points, j, &centers, c);
            if d < *m {
                *m = d;
            }
        }
    }
    centers
}

// Empty clusters keep their previous center.
fn update_centers<T: Real>(points: &DMatrix<T>, assign: &[usize], centers: &mut DMatrix<T>) {
    let k = centers.ncols();
    let mut sums = DMatrix::<T>::zeros(points.nrows(), k);
    let mut counts = vec![0usize; k];
    for (j, &c) in assign.iter().enumerate() {
        let mut col = sums.column_mut(c);
        col += points.column(j);
        counts[c] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mean = sums.column(c) / T::lit(count as f64);
            centers.set_column(c, &mean);
        }
    }
}

/// Connected components of the graph with an edge wherever `A_ij > tol`
/// (or `A_ji > tol`). Components are numbered by their smallest vertex.
pub fn connected_components<T: Real>(a: &DMatrix<T>, tol: T) -> (Labeling, usize) {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n.min(a.ncols()) {
            if a[(i, j)] > tol || a[(j, i)] > tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let labels = Labeling::new(roots).canonical();
    let count = labels.n_clusters();
    (labels, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::clustering_error;
    use std::collections::VecDeque;

    fn block_matrix(sizes: &[usize], seed: u64) -> (DMatrix<f64>, Labeling) {
        let n: usize = sizes.iter().sum();
        let mut truth = Vec::new();
        for (k, &s) in sizes.iter().enumerate() {
            truth.extend(std::iter::repeat_n(k, s));
        }
        let mut rng = SeedSpec::new(seed, 0).rng();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if truth[i] == truth[j] {
                    let w = 0.1 + rng.random::<f64>();
                    m[(i, j)] = w;
                    m[(j, i)] = w;
                }
            }
        }
        (m, Labeling::new(truth))
    }

    fn bfs_components(a: &DMatrix<f64>, tol: f64) -> Vec<usize> {
        let n = a.nrows();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([s]);
            comp[s] = next;
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    if comp[v] == usize::MAX && (a[(u, v)] > tol || a[(v, u)] > tol) {
                        comp[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    #[test]
    fn exact_blocks_are_recovered() {
        let (m, truth) = block_matrix(&[5, 7, 4], 1);
        let ones = m.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        for mat in [m, ones] {
            let a = CoAssociationMatrix::from_matrix(mat, false).unwrap();
            let labels = spectral_cluster(&a, &SpectralConfig::new(3, SeedSpec::new(0, 0))).unwrap();
            assert_eq!(clustering_error(&labels, &truth).unwrap(), 0.0);
        }
    }

    #[test]
    fn unnormalized_laplacian_recovers_blocks() {
        let (m, truth) = block_matrix(&[6, 3, 8], 4);
        let a = CoAssociationMatrix::from_matrix(m, false).unwrap();
        let mut cfg = SpectralConfig::new(3, SeedSpec::new(1, 0));
        cfg.laplacian = Laplacian::Unnormalized;
        let labels = spectral_cluster(&a, &cfg).unwrap();
        assert_eq!(clustering_error(&labels, &truth).unwrap(), 0.0);
    }

    #[test]
    fn single_point_and_bad_k() {
        let a = CoAssociationMatrix::from_matrix(DMatrix::<f64>::zeros(1, 1), false).unwrap();
        let labels = spectral_cluster(&a, &SpectralConfig::new(1, SeedSpec::new(0, 0))).unwrap();
        assert_eq!(labels.as_slice(), &[0]);
        assert!(spectral_cluster(&a, &SpectralConfig::new(2, SeedSpec::new(0, 0))).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (m, _) = block_matrix(&[10, 10], 3);
        let noisy = m.map(|v| v + 0.05);
        let a = CoAssociationMatrix::from_matrix(noisy, false).unwrap();
        let cfg = SpectralConfig::new(2, SeedSpec::new(5, 5));
        assert_eq!(spectral_cluster(&a, &cfg).unwrap(), spectral_cluster(&a, &cfg).unwrap());
    }

    #[test]
    fn permutation_invariance() {
        let (m, truth) = block_matrix(&[6, 9, 5], 8);
        let perm: Vec<usize> = (0..20).map(|i| (i * 7) % 20).collect();
        let pm = DMatrix::from_fn(20, 20, |i, j| m[(perm[i], perm[j])]);
        let cfg = SpectralConfig::new(3, SeedSpec::new(2, 0));
        let a = spectral_cluster(&CoAssociationMatrix::from_matrix(m, false).unwrap(), &cfg).unwrap();
        let b = spectral_cluster(&CoAssociationMatrix::from_matrix(pm, false).unwrap(), &cfg).unwrap();
        assert_eq!(
            clustering_error(&a, &truth).unwrap(),
            clustering_error(&b, &truth.permuted(&perm)).unwrap()
        );
    }

    #[test]
    fn component_examples() {
        let (m, _) = block_matrix(&[3, 4], 2);
        assert_eq!(connected_components(&m, 0.0).1, 2);
        let z = DMatrix::<f64>::zeros(5, 5);
        assert_eq!(connected_components(&z, 0.0).1, 5);
    }

    #[test]
    fn components_match_bfs_on_random_geometric_graphs() {
        let mut rng = SeedSpec::new(12, 0).rng();
        for trial in 0..20 {
            let n = 30 + trial;
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let r = 0.15 + 0.01 * trial as f64;
            let a = DMatrix::from_fn(n, n, |i, j| {
                let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
                if i != j && d < r { 1.0 - d } else { 0.0 }
            });
            let (labels, count) = connected_components(&a, 0.0);
            let oracle = Labeling::new(bfs_components(&a, 0.0));
            assert_eq!(labels, oracle.canonical());
            assert_eq!(count, oracle.n_clusters());
        }
    }
}
