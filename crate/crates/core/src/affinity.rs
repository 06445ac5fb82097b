//! Affinity construction: co-association accumulation over base clusterings,
//! top-q thresholding, the EKSS / EKSS-0 drivers and the TSC baseline.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DataMatrix, SeedSpec};
use crate::kss::{run_kss, EmptyClusterPolicy, KssConfig, Labeling};
use crate::scalar::Real;
use crate::spectral::{spectral_cluster, Laplacian, SpectralConfig};

/// Stream id reserved for the spectral step of an ensemble; base clusterings
/// use streams `0..B`.
pub const SPECTRAL_STREAM: u64 = u64::MAX;

const ENSEMBLE_CHUNK: usize = 256;

/// Symmetric `N x N` affinity with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoAssociationMatrix<T: Real> {
    values: DMatrix<T>,
    weighted: bool,
}

impl<T: Real> CoAssociationMatrix<T> {
    /// Validates squareness, finiteness, nonnegativity and symmetry.
    pub fn from_matrix(values: DMatrix<T>, weighted: bool) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                found: values.ncols(),
            });
        }
        let n = values.nrows();
        for j in 0..n {
            for i in 0..n {
                let v = values[(i, j)];
                if !v.finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                if v < T::zero() {
                    return Err(Error::InvalidParameter(format!("negative affinity at ({i}, {j})")));
                }
                if (v - values[(j, i)]).abs() > T::lit(1e-12) {
                    return Err(Error::InvalidParameter(format!("affinity is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { values, weighted })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.values
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    pub fn with_zero_diagonal(&self) -> Self {
        let mut values = self.values.clone();
        values.fill_diagonal(T::zero());
        Self {
            values,
            weighted: self.weighted,
        }
    }
}

/// Streaming co-association accumulator. Unweighted votes are kept as exact
/// integer counts; weighted votes are summed in insertion order.
#[derive(Debug, Clone)]
pub struct CoAssociationBuilder<T: Real> {
    n: usize,
    added: usize,
    counts: Vec<u32>,
    sums: Option<Vec<T>>,
}

impl<T: Real> CoAssociationBuilder<T> {
    pub fn new(n: usize, weighted: bool) -> Self {
        Self {
            n,
            added: 0,
            counts: if weighted { Vec::new() } else { vec![0; n * n] },
            sums: weighted.then(|| vec![T::zero(); n * n]),
        }
    }

    pub fn n_added(&self) -> usize {
        self.added
    }

    /// Adds one base clustering. `weight` is required iff the builder is
    /// weighted and must lie in `[0, 1]`.
    pub fn add(&mut self, labels: &Labeling, weight: Option<T>) -> Result<()> {
        if labels.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: labels.len(),
            });
        }
        let n = self.n;
        let members = labels.members(0);
        match (&mut self.sums, weight) {
            (Some(sums), Some(w)) => {
                if !(w >= T::zero() && w <= T::one()) {
                    return Err(Error::InvalidParameter(format!("weight {w} outside [0, 1]")));
                }
                for idx in &members {
                    for &a in idx {
                        let row = a * n;
                        for &b in idx {
                            sums[row + b] += w;
                        }
                    }
                }
            }
            (None, None) => {
                for idx in &members {
                    for &a in idx {
                        let row = a * n;
                        for &b in idx {
                            self.counts[row + b] += 1;
                        }
                    }
                }
            }
            (Some(_), None) => return Err(Error::InvalidParameter("weighted accumulation needs a weight".into())),
            (None, Some(_)) => return Err(Error::InvalidParameter("unweighted accumulation takes no weight".into())),
        }
        self.added += 1;
        Ok(())
    }

    /// Divides by the number of base clusterings `B`.
    pub fn finish(self) -> Result<CoAssociationMatrix<T>> {
        if self.added == 0 {
            return Err(Error::InvalidParameter("no base clusterings accumulated".into()));
        }
        let b = T::lit(self.added as f64);
        let n = self.n;
        let weighted = self.sums.is_some();
        // Row-major buffers; the matrix is symmetric so layout is immaterial.
        let values = match self.sums {
            Some(sums) => DMatrix::from_iterator(n, n, sums.into_iter().map(|s| s / b)),
            None => DMatrix::from_iterator(n, n, self.counts.into_iter().map(|c| T::lit(c as f64) / b)),
        };
        Ok(CoAssociationMatrix { values, weighted })
    }
}

/// `A_ij = (1/B) Σ_b w(b) 1{labels_b(i) = labels_b(j)}`, with `w ≡ 1` when
/// `weights` is `None`.
pub fn accumulate<T: Real>(labelings: &[Labeling], weights: Option<&[T]>) -> Result<CoAssociationMatrix<T>> {
    let first = labelings
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one labeling is required".into()))?;
    if let Some(w) = weights {
        if w.len() != labelings.len() {
            return Err(Error::LengthMismatch {
                expected: labelings.len(),
                found: w.len(),
            });
        }
    }
    let mut builder = CoAssociationBuilder::new(first.len(), weights.is_some());
    for (b, labels) in labelings.iter().enumerate() {
        builder.add(labels, weights.map(|w| w[b]))?;
    }
    builder.finish()
}

// Indices of the q largest entries of `vals`, ties broken toward lower index.
fn top_q<T: Real>(vals: &[T], q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    let cmp = |a: &usize, b: &usize| {
        vals[*b]
            .partial_cmp(&vals[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    if q < idx.len() {
        idx.select_nth_unstable_by(q, cmp);
        idx.truncate(q);
    }
    idx
}

/// Keeps the top `q` entries of every row and of every column (after zeroing
/// the diagonal) and averages the two sparsified matrices.
pub fn thresh<T: Real>(a: &CoAssociationMatrix<T>, q: usize) -> Result<CoAssociationMatrix<T>> {
    let n = a.n();
    if q == 0 || q > n {
        return Err(Error::InvalidParameter(format!("threshold q = {q} must be in 1..={n}")));
    }
    let mut base = a.values.clone();
    base.fill_diagonal(T::zero());
    let half = T::lit(0.5);
    let mut out = DMatrix::<T>::zeros(n, n);

    let mut buf = vec![T::zero(); n];
    for i in 0..n {
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = base[(i, j)];
        }
        for j in top_q(&buf, q) {
            out[(i, j)] += half * base[(i, j)];
        }
    }
    for j in 0..n {
        let col = base.column(j);
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = col[i];
        }
        for i in top_q(&buf, q) {
            out[(i, j)] += half * base[(i, j)];
        }
    }
    Ok(CoAssociationMatrix {
        values: out,
        weighted: a.weighted,
    })
}

/// Parameters of an EKSS run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Candidate subspaces per base clustering (`K̄`).
    pub n_candidates: usize,
    /// Candidate dimension (`d̄`).
    pub candidate_dim: usize,
    /// Output clusters (`K`).
    pub n_clusters: usize,
    /// Thresholding parameter `q`; `None` skips thresholding.
    pub threshold: Option<usize>,
    /// Number of base clusterings (`B`).
    pub base_clusterings: usize,
    /// KSS iterations per base clustering (`T`).
    pub iterations: usize,
    /// Weight each base clustering by its KSS quality.
    pub weighted: bool,
    pub empty_policy: EmptyClusterPolicy,
    pub kmeans_restarts: usize,
    pub kmeans_iters: usize,
    pub laplacian: Laplacian,
}

impl EnsembleConfig {
    pub fn new(n_candidates: usize, candidate_dim: usize, n_clusters: usize) -> Self {
        Self {
            n_candidates,
            candidate_dim,
            n_clusters,
            threshold: None,
            base_clusterings: 1000,
            iterations: 3,
            weighted: false,
            empty_policy: EmptyClusterPolicy::Redraw,
            kmeans_restarts: 20,
            kmeans_iters: 100,
            laplacian: Laplacian::SymmetricNormalized,
        }
    }

    pub fn threshold(mut self, q: Option<usize>) -> Self {
        self.threshold = q;
        self
    }

    pub fn base_clusterings(mut self, b: usize) -> Self {
        self.base_clusterings = b;
        self
    }

    pub fn iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn weighted(mut self, weighted: bool) -> Self {
        self.weighted = weighted;
        self
    }

    fn kss(&self) -> KssConfig {
        KssConfig {
            n_candidates: self.n_candidates,
            candidate_dim: self.candidate_dim,
            iterations: self.iterations,
            empty_policy: self.empty_policy,
        }
    }

    fn spectral(&self, seed: u64) -> SpectralConfig {
        SpectralConfig {
            n_clusters: self.n_clusters,
            kmeans_restarts: self.kmeans_restarts,
            kmeans_iters: self.kmeans_iters,
            seed: SeedSpec::new(seed, SPECTRAL_STREAM),
            laplacian: self.laplacian,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput<T: Real> {
    pub labels: Labeling,
    /// Raw co-association (unit diagonal).
    pub coassociation: CoAssociationMatrix<T>,
    /// Zero-diagonal, optionally thresholded matrix handed to spectral
    /// clustering.
    pub affinity: CoAssociationMatrix<T>,
}

/// Builds the co-association matrix of `B` KSS runs, base clustering `b`
/// drawing from stream `(seed, b)`.
pub fn ekss_coassociation<T: Real>(
    data: &DataMatrix<T>,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<CoAssociationMatrix<T>> {
    if cfg.base_clusterings == 0 {
        return Err(Error::InvalidParameter("B must be at least 1".into()));
    }
    let kss = cfg.kss();
    let mut builder = CoAssociationBuilder::new(data.n_points(), cfg.weighted);
    let mut start = 0;
    while start < cfg.base_clusterings {
        let end = (start + ENSEMBLE_CHUNK).min(cfg.base_clusterings);
        let runs = (start..end)
            .into_par_iter()
            .map(|b| run_kss(data, &kss, &SeedSpec::new(seed, b as u64)).map(|r| (r.labels, r.weight)))
            .collect::<Result<Vec<_>>>()?;
        for (labels, weight) in &runs {
            builder.add(labels, cfg.weighted.then_some(*weight))?;
        }
        start = end;
    }
    builder.finish()
}

fn finish_pipeline<T: Real>(
    coassociation: CoAssociationMatrix<T>,
    threshold: Option<usize>,
    spectral: &SpectralConfig,
) -> Result<EnsembleOutput<T>> {
    let affinity = match threshold {
        Some(q) => thresh(&coassociation, q)?,
        None => coassociation.with_zero_diagonal(),
    };
    let labels = spectral_cluster(&affinity, spectral)?;
    Ok(EnsembleOutput {
        labels,
        coassociation,
        affinity,
    })
}

fn check_output_clusters<T: Real>(data: &DataMatrix<T>, k: usize) -> Result<()> {
    if k == 0 || k > data.n_points() {
        return Err(Error::InvalidParameter(format!(
            "K = {k} output clusters must be in 1..={}",
            data.n_points()
        )));
    }
    Ok(())
}

/// Ensemble K-subspaces: co-association of `B` KSS runs, optional top-q
/// thresholding, then spectral clustering into `K` groups.
pub fn ekss<T: Real>(data: &DataMatrix<T>, cfg: &EnsembleConfig, seed: u64) -> Result<EnsembleOutput<T>> {
    check_output_clusters(data, cfg.n_clusters)?;
    if let Some(q) = cfg.threshold {
        if q == 0 || q > data.n_points() {
            return Err(Error::InvalidParameter(format!("threshold q = {q} out of range")));
        }
    }
    let coassociation = ekss_coassociation(data, cfg, seed)?;
    finish_pipeline(coassociation, cfg.threshold, &cfg.spectral(seed))
}

/// EKSS-0: [`ekss`] with zero KSS iterations and unweighted votes.
pub fn ekss0<T: Real>(data: &DataMatrix<T>, cfg: &EnsembleConfig, seed: u64) -> Result<EnsembleOutput<T>> {
    let cfg = cfg.iterations(0).weighted(false);
    ekss(data, &cfg, seed)
}

/// Edge weights for the TSC affinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TscWeights {
    /// `exp(-2 arccos |<x_i, x_j>|)`.
    #[default]
    ArcCos,
    /// `|<x_i, x_j>|`.
    AbsInnerProduct,
}

/// Thresholded-subspace-clustering affinity: transformed absolute inner
/// products, zero diagonal, then [`thresh`].
pub fn tsc_affinity<T: Real>(data: &DataMatrix<T>, q: usize, weights: TscWeights) -> Result<CoAssociationMatrix<T>> {
    let n = data.n_points();
    if q == 0 || q >= n {
        return Err(Error::InvalidParameter(format!("TSC q = {q} must be in 1..{n}")));
    }
    let gram = data.values().tr_mul(data.values());
    let two = T::lit(2.0);
    let mut z = gram.map(|g| {
        let c = g.abs().min(T::one());
        match weights {
            TscWeights::ArcCos => (-two * c.acos()).exp(),
            TscWeights::AbsInnerProduct => c,
        }
    });
    z.fill_diagonal(T::zero());
    // Symmetrize against rounding in the Gram product.
    let z = (&z + z.transpose()) * T::lit(0.5);
    thresh(&CoAssociationMatrix { values: z, weighted: true }, q)
}

/// Full TSC pipeline: [`tsc_affinity`] followed by spectral clustering.
pub fn tsc<T: Real>(
    data: &DataMatrix<T>,
    q: usize,
    n_clusters: usize,
    weights: TscWeights,
    seed: u64,
) -> Result<EnsembleOutput<T>> {
    check_output_clusters(data, n_clusters)?;
    let affinity = tsc_affinity(data, q, weights)?;
    let spectral = SpectralConfig::new(n_clusters, SeedSpec::new(seed, SPECTRAL_STREAM));
    let labels = spectral_cluster(&affinity, &spectral)?;
    Ok(EnsembleOutput {
        labels,
        coassociation: affinity.clone(),
        affinity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{clustering_error, nfc_check};
    use crate::synth::gen_random_uos;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn single_all_in_one_labeling_gives_ones() {
        let a = accumulate::<f64>(&[Labeling::new(vec![0; 4])], None).unwrap();
        assert!(a.values().iter().all(|&v| v == 1.0));
        assert!(!a.is_weighted());
    }

    #[test]
    fn two_labelings_hand_trace() {
        let a = accumulate::<f64>(&[Labeling::new(vec![0, 0, 1]), Labeling::new(vec![0, 1, 1])], None).unwrap();
        let expected = mat(&[&[1.0, 0.5, 0.0], &[0.5, 1.0, 0.5], &[0.0, 0.5, 1.0]]);
        assert_eq!(a.values(), &expected);
    }

    #[test]
    fn weighted_accumulation_divides_by_b() {
        let labs = [Labeling::new(vec![0, 0]), Labeling::new(vec![0, 1])];
        let a = accumulate(&labs, Some(&[0.5, 1.0][..])).unwrap();
        assert_eq!(a.values(), &mat(&[&[0.75, 0.25], &[0.25, 0.75]]));
        assert!(a.is_weighted());
        assert!(accumulate(&labs, Some(&[1.5, 1.0][..])).is_err());
        assert!(accumulate(&labs, Some(&[1.0][..])).is_err());
    }

    #[test]
    fn accumulate_rejects_mismatched_lengths() {
        let r = accumulate::<f64>(&[Labeling::new(vec![0, 0]), Labeling::new(vec![0])], None);
        assert!(matches!(r, Err(Error::LengthMismatch { .. })));
        assert!(accumulate::<f64>(&[], None).is_err());
    }

    #[test]
    fn thresh_hand_trace() {
        let a = CoAssociationMatrix::from_matrix(mat(&[&[0.0, 0.9, 0.2], &[0.9, 0.0, 0.5], &[0.2, 0.5, 0.0]]), false).unwrap();
        let t = thresh(&a, 1).unwrap();
        let expected = mat(&[&[0.0, 0.9, 0.0], &[0.9, 0.0, 0.25], &[0.0, 0.25, 0.0]]);
        assert!((t.values() - expected).amax() < 1e-15);
    }

    #[test]
    fn thresh_full_keeps_everything_but_diagonal() {
        let a = accumulate::<f64>(&[Labeling::new(vec![0, 0, 1, 1]), Labeling::new(vec![0, 1, 1, 0])], None).unwrap();
        let t = thresh(&a, 3).unwrap();
        assert_eq!(t.values(), a.with_zero_diagonal().values());
        assert!(thresh(&a, 0).is_err());
        assert!(thresh(&a, 5).is_err());
    }

    #[test]
    fn thresh_ties_prefer_lower_index() {
        let a = CoAssociationMatrix::from_matrix(DMatrix::from_element(4, 4, 0.5), false).unwrap();
        let t = thresh(&a, 1).unwrap();
        // Row 0 keeps column 1, rows 1..3 keep column 0; column 0 keeps row 1.
        assert_eq!(t.get(0, 1), 0.5);
        assert_eq!(t.get(1, 0), 0.5);
        assert_eq!(t.get(2, 0), 0.25);
        assert_eq!(t.get(2, 3), 0.0);
    }

    #[test]
    fn thresh_keeps_at_least_q_per_row() {
        let mut rng = SeedSpec::new(3, 3).rng();
        for n in [5usize, 9, 16] {
            let raw = DMatrix::<f64>::from_fn(n, n, |_, _| rand::Rng::random::<f64>(&mut rng) + 0.01);
            let sym = (&raw + raw.transpose()) * 0.5;
            let a = CoAssociationMatrix::from_matrix(sym, false).unwrap();
            for q in 1..n {
                let t = thresh(&a, q).unwrap();
                for i in 0..n {
                    let nz = t.values().row(i).iter().filter(|&&v| v > 0.0).count();
                    assert!(nz >= q, "n={n} q={q} row {i}: {nz}");
                    assert_eq!(t.get(i, i), 0.0);
                }
                assert!((t.values() - t.values().transpose()).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn single_base_clustering_reproduces_partition() {
        let inst = gen_random_uos::<f64>(20, &[2, 2, 2], &[15, 15, 15], 0.0, &SeedSpec::new(1, 0)).unwrap();
        let cfg = EnsembleConfig::new(3, 2, 3).base_clusterings(1);
        let out = ekss(&inst.data, &cfg, 4).unwrap();
        let base = run_kss(&inst.data, &cfg.kss(), &SeedSpec::new(4, 0)).unwrap();
        if base.labels.n_clusters() == 3 && base.labels.counts(3).iter().all(|&c| c > 0) {
            assert_eq!(clustering_error(&out.labels, &base.labels).unwrap(), 0.0);
        }
    }

    #[test]
    fn ekss_separates_orthogonal_lines() {
        let mut cols = Vec::new();
        let mut truth = Vec::new();
        let mut rng = SeedSpec::new(6, 0).rng();
        for j in 0..40 {
            let k = j % 2;
            let s: f64 = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
            let mut v = DVector::zeros(4);
            v[k] = s * (1.0 + rand::Rng::random::<f64>(&mut rng));
            cols.push(v);
            truth.push(k);
        }
        let data = DataMatrix::from_columns(&cols).unwrap().normalized().unwrap();
        let cfg = EnsembleConfig::new(2, 1, 2).base_clusterings(25);
        let out = ekss(&data, &cfg, 9).unwrap();
        assert_eq!(clustering_error(&out.labels, &Labeling::new(truth)).unwrap(), 0.0);
    }

    #[test]
    fn ekss0_equals_ekss_with_zero_iterations() {
        let inst = gen_random_uos::<f64>(15, &[2, 2], &[12, 12], 0.0, &SeedSpec::new(2, 0)).unwrap();
        let cfg = EnsembleConfig::new(2, 2, 2).threshold(Some(3)).base_clusterings(40).iterations(3).weighted(true);
        let a = ekss0(&inst.data, &cfg, 11).unwrap();
        let b = ekss(&inst.data, &cfg.iterations(0).weighted(false), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_points_always_coassociate() {
        let mut m = DMatrix::<f64>::from_fn(5, 6, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let c = m.column(0).into_owned();
        m.set_column(3, &c);
        let data = DataMatrix::new(m).unwrap();
        for b in [1, 7, 30] {
            let cfg = EnsembleConfig::new(3, 1, 2).base_clusterings(b);
            let a = ekss_coassociation(&data, &cfg.iterations(0), 5).unwrap();
            assert_eq!(a.get(0, 3), 1.0);
        }
    }

    #[test]
    fn weighted_ensemble_is_deterministic() {
        let inst = gen_random_uos::<f64>(12, &[2, 2], &[10, 10], 0.0, &SeedSpec::new(3, 0)).unwrap();
        let cfg = EnsembleConfig::new(2, 2, 2).base_clusterings(300).weighted(true);
        let a = ekss_coassociation(&inst.data, &cfg, 8).unwrap();
        let b = ekss_coassociation(&inst.data, &cfg, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn tsc_weight_closed_forms() {
        let data = DataMatrix::new(mat(&[&[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]])).unwrap();
        let z = tsc_affinity(&data, 2, TscWeights::ArcCos).unwrap();
        assert!((z.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((z.get(0, 2) - (-std::f64::consts::PI).exp()).abs() < 1e-12);
        assert!(((-std::f64::consts::PI).exp() - 0.0432).abs() < 1e-4);
        let raw = tsc_affinity(&data, 2, TscWeights::AbsInnerProduct).unwrap();
        assert_eq!(raw.get(0, 2), 0.0);
        assert!(tsc_affinity(&data, 3, TscWeights::ArcCos).is_err());
        assert!(tsc_affinity(&data, 0, TscWeights::ArcCos).is_err());
    }

    #[test]
    fn tsc_has_no_false_connections_on_orthogonal_subspaces() {
        let mut rng = SeedSpec::new(10, 0).rng();
        let mut cols = Vec::new();
        let mut truth = Vec::new();
        for k in 0..3 {
            for _ in 0..20 {
                let mut v = DVector::<f64>::zeros(9);
                for r in 0..3 {
                    v[3 * k + r] = crate::geometry::gaussian(&mut rng);
                }
                cols.push(v);
                truth.push(k);
            }
        }
        let data = DataMatrix::from_columns(&cols).unwrap().normalized().unwrap();
        let z = tsc_affinity(&data, 3, TscWeights::ArcCos).unwrap();
        assert!(nfc_check(z.values(), &Labeling::new(truth)).unwrap().holds);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn accumulate_is_symmetric_and_quantized(
            labs in proptest::collection::vec(proptest::collection::vec(0usize..3, 7), 1..6)
        ) {
            let labelings: Vec<Labeling> = labs.into_iter().map(Labeling::new).collect();
            let b = labelings.len() as f64;
            let a = accumulate::<f64>(&labelings, None).unwrap();
            for i in 0..7 {
                prop_assert_eq!(a.get(i, i), 1.0);
                for j in 0..7 {
                    let v = a.get(i, j);
                    prop_assert_eq!(v, a.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert!(((v * b).round() - v * b).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn coassociation_is_permutation_equivariant(seed in 0u64..50) {
            let inst = gen_random_uos::<f64>(8, &[2, 2], &[6, 6], 0.0, &SeedSpec::new(seed, 0)).unwrap();
            let perm: Vec<usize> = (0..12).rev().collect();
            let cfg = EnsembleConfig::new(2, 2, 2).base_clusterings(20).iterations(2);
            let a = ekss_coassociation(&inst.data, &cfg, seed).unwrap();
            let b = ekss_coassociation(&inst.data.permuted(&perm), &cfg, seed).unwrap();
            for i in 0..12 {
                for j in 0..12 {
                    prop_assert_eq!(a.get(perm[i], perm[j]), b.get(i, j));
                }
            }
        }
    }
}
