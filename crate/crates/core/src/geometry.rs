//! Numerical primitives: data/basis containers, Stiefel sampling, projection
//! energies, uncentered PCA and the seeding contract used by every stochastic
//! routine.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Column-major point cloud: `D` rows (ambient dimension), `N` columns (points).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T: Real> {
    values: DMatrix<T>,
    unit_normalized: bool,
}

impl<T: Real> DataMatrix<T> {
    /// Wraps a matrix after checking that it is non-empty and finite.
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for col in 0..values.ncols() {
            for row in 0..values.nrows() {
                if !values[(row, col)].finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(Self {
            values,
            unit_normalized: false,
        })
    }

    pub fn from_columns(columns: &[DVector<T>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let dim = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_columns(columns))
    }

    /// Ambient dimension `D`.
    pub fn ambient_dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of points `N`.
    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.values
    }

    pub fn point(&self, j: usize) -> DVectorView<'_, T> {
        self.values.column(j)
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.unit_normalized
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.values.norm_squared()
    }

    /// Scales every column to unit Euclidean norm. Zero columns are rejected.
    pub fn normalize_columns(&mut self) -> Result<()> {
        for j in 0..self.values.ncols() {
            let norm = self.values.column(j).norm();
            if norm == T::zero() {
                return Err(Error::ZeroColumn(j));
            }
            self.values.column_mut(j).unscale_mut(norm);
        }
        self.unit_normalized = true;
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize_columns()?;
        Ok(self)
    }

    /// Gathers the listed columns into a fresh `D x |idx|` matrix.
    pub fn select_columns(&self, idx: &[usize]) -> DMatrix<T> {
        self.values.select_columns(idx.iter())
    }

    /// Returns the data with columns reordered so that new column `j` is old
    /// column `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(perm.iter()),
            unit_normalized: self.unit_normalized,
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut DMatrix<T> {
        self.unit_normalized = false;
        &mut self.values
    }
}

/// `D x d̄` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis<T: Real> {
    columns: DMatrix<T>,
}

impl<T: Real> SubspaceBasis<T> {
    /// Validates `1 <= d̄ <= D` and orthonormality within [`Real::ORTHO_TOL`].
    pub fn new(columns: DMatrix<T>) -> Result<Self> {
        check_dims(columns.nrows(), columns.ncols())?;
        let defect = orthonormality_defect(&columns);
        if defect.is_nan() || defect > T::ORTHO_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(Self { columns })
    }

    pub(crate) fn new_unchecked(columns: DMatrix<T>) -> Self {
        debug_assert!(orthonormality_defect(&columns) <= T::ORTHO_TOL * 10.0);
        Self { columns }
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.columns
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.columns
    }

    /// Orthogonal projector `UUᵀ`.
    pub fn projector(&self) -> DMatrix<T> {
        &self.columns * self.columns.transpose()
    }

    /// Residual `x - UUᵀx`.
    pub fn residual(&self, x: DVectorView<'_, T>) -> DVector<T> {
        let coeffs = self.columns.tr_mul(&x);
        x - &self.columns * coeffs
    }
}

/// Largest entry of `|UᵀU - I|`.
pub fn orthonormality_defect<T: Real>(u: &DMatrix<T>) -> f64 {
    let gram = u.tr_mul(u);
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (gram[(i, j)].as_f64() - target).abs();
            if dev.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(dev);
        }
    }
    worst
}

fn check_dims(ambient: usize, dim: usize) -> Result<()> {
    if dim == 0 || dim > ambient {
        return Err(Error::InvalidDimension(format!(
            "subspace dimension must satisfy 1 <= d <= D, got d = {dim}, D = {ambient}"
        )));
    }
    Ok(())
}

/// Seed for one deterministic random stream.
///
/// Streams sharing a master seed but differing in `stream_id` are disjoint
/// ChaCha keystreams, so ensemble members can run in any order or thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Sibling stream under the same master seed.
    pub const fn stream(&self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    /// Child seed for a nested computation, keyed by `tag`. The child's
    /// master seed is a hash of (master, stream, tag) and its stream is 0.
    pub fn derive(&self, tag: u64) -> Self {
        let h = splitmix64(self.master_seed ^ splitmix64(self.stream_id ^ splitmix64(tag)));
        Self::new(h, 0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Uniform draw from the Stiefel manifold `St(D, d̄)` using the stream `seed`.
pub fn sample_stiefel<T: Real>(ambient: usize, dim: usize, seed: &SeedSpec) -> Result<SubspaceBasis<T>> {
    sample_stiefel_from(ambient, dim, &mut seed.rng())
}

/// Uniform draw from `St(D, d̄)`: QR of a standard Gaussian `D x d̄` matrix with
/// the triangular factor's diagonal made positive.
pub fn sample_stiefel_from<T: Real, R: Rng + ?Sized>(
    ambient: usize,
    dim: usize,
    rng: &mut R,
) -> Result<SubspaceBasis<T>> {
    check_dims(ambient, dim)?;
    let mut g = DMatrix::<T>::zeros(ambient, dim);
    for v in g.iter_mut() {
        *v = gaussian(rng);
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(SubspaceBasis::new_unchecked(q))
}

/// Projection energy `‖Uᵀx‖₂`.
pub fn projection_energy<T: Real>(x: DVectorView<'_, T>, basis: &SubspaceBasis<T>) -> Result<T> {
    if x.len() != basis.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.ambient_dim(),
            found: x.len(),
        });
    }
    Ok(basis.matrix().tr_mul(&x).norm())
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_sign<T: Real>(v: &mut DVector<T>) {
    let mut best = 0;
    let mut best_abs = T::zero();
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < T::zero() {
        v.neg_mut();
    }
}

/// Top-`d̄` left singular vectors of the uncentered point matrix `points`
/// (`D x n`). Rank-deficient input is completed with random orthonormal
/// directions drawn from `rng`.
pub fn pca_basis<T: Real, R: Rng + ?Sized>(
    points: &DMatrix<T>,
    dim: usize,
    rng: &mut R,
) -> Result<SubspaceBasis<T>> {
    let ambient = points.nrows();
    if points.ncols() == 0 {
        return Err(Error::EmptyPointSet);
    }
    check_dims(ambient, dim)?;

    let leading = if points.ncols() >= ambient {
        leading_from_gram(points, dim)
    } else {
        leading_from_svd(points, dim)
    };

    let mut cols: Vec<DVector<T>> = Vec::with_capacity(dim);
    for mut v in leading {
        fix_sign(&mut v);
        cols.push(v);
    }
    complete_orthonormal(&mut cols, ambient, dim, rng);
    Ok(SubspaceBasis::new_unchecked(DMatrix::from_columns(&cols)))
}

// Eigenvectors of XXᵀ, largest first, restricted to numerically nonzero
// eigenvalues.
fn leading_from_gram<T: Real>(points: &DMatrix<T>, dim: usize) -> Vec<DVector<T>> {
    let ambient = points.nrows();
    let gram = points * points.transpose();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..ambient).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(T::zero());
    let tol = top * T::lit(ambient as f64 * 64.0) * T::default_epsilon();
    order
        .into_iter()
        .take(dim)
        .filter(|&i| top > T::zero() && eig.eigenvalues[i] > tol)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect()
}

fn leading_from_svd<T: Real>(points: &DMatrix<T>, dim: usize) -> Vec<DVector<T>> {
    let (d, n) = points.shape();
    let svd = points.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| {
        sv[b].partial_cmp(&sv[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = sv[order[0]];
    let tol = top * T::lit(d.max(n) as f64 * 4.0) * T::default_epsilon();
    order
        .into_iter()
        .take(dim)
        .filter(|&i| top > T::zero() && sv[i] > tol)
        .map(|i| u.column(i).into_owned())
        .collect()
}

/// Extends orthonormal `cols` to `dim` columns with Gaussian directions
/// orthogonalized against the current set (two Gram-Schmidt passes).
pub(crate) fn complete_orthonormal<T: Real, R: Rng + ?Sized>(
    cols: &mut Vec<DVector<T>>,
    ambient: usize,
    dim: usize,
    rng: &mut R,
) {
    let floor = T::lit(1e-6);
    while cols.len() < dim {
        let mut v = DVector::<T>::from_fn(ambient, |_, _| gaussian(rng));
        let start = v.norm();
        for _ in 0..2 {
            for c in cols.iter() {
                let proj = c.dot(&v);
                v.axpy(-proj, c, T::one());
            }
        }
        let norm = v.norm();
        if norm > floor * start {
            v.unscale_mut(norm);
            cols.push(v);
        }
    }
}
