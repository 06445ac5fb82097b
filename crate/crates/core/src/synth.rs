//! Synthetic union-of-subspaces instances: independent random subspaces,
//! three subspaces at a controlled principal angle, Gaussian noise and
//! missing entries.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gaussian, sample_stiefel_from, DataMatrix, SeedSpec, SubspaceBasis};
use crate::kss::Labeling;
use crate::scalar::Real;

/// Echo of the request that produced an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    RandomUos {
        ambient: usize,
        dims: Vec<usize>,
        counts: Vec<usize>,
        sigma: f64,
        seed: SeedSpec,
    },
    AngledUos {
        ambient: usize,
        dim: usize,
        theta: f64,
        counts: Vec<usize>,
        sigma: f64,
        seed: SeedSpec,
    },
    Masked {
        base: Box<GeneratorConfig>,
        s: usize,
        seed: SeedSpec,
    },
}

/// Three `d`-dimensional subspaces where `S₂` and `S₃` each make all
/// principal angles equal to `theta` with `S₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSpec {
    pub theta: f64,
    pub shared_dim: usize,
}

impl AngleSpec {
    pub fn new(theta: f64, shared_dim: usize) -> Result<Self> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!("theta = {theta} outside (0, pi/2]")));
        }
        if shared_dim == 0 {
            return Err(Error::InvalidDimension("subspace dimension must be positive".into()));
        }
        Ok(Self { theta, shared_dim })
    }
}

/// A generated dataset with its ground truth. Points are stored cluster by
/// cluster in label order.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T: Real> {
    pub data: DataMatrix<T>,
    pub true_labels: Labeling,
    pub true_bases: Vec<SubspaceBasis<T>>,
    pub noise_sigma: f64,
    /// Zeroed coordinates of each point, sorted.
    pub missing_mask: Option<Vec<Vec<usize>>>,
    pub generator_config: GeneratorConfig,
}

impl<T: Real> ProblemInstance<T> {
    pub fn n_clusters(&self) -> usize {
        self.true_bases.len()
    }
}

// Domain tags keep generator streams apart from algorithm streams that
// callers often key with the same master seed.
const GENERATOR_TAG: u64 = 0x5359_4e54_4845_5449;
const MISSING_TAG: u64 = 0x4d49_5353_494e_4721;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma = {sigma} must be finite and nonnegative")))
    }
}

// Samples points for each basis in turn. Noise is drawn even when sigma is
// zero so both settings consume the same random stream.
fn sample_points<T: Real, R: Rng + ?Sized>(
    bases: &[SubspaceBasis<T>],
    counts: &[usize],
    sigma: f64,
    rng: &mut R,
) -> Result<(DataMatrix<T>, Labeling)> {
    let ambient = bases[0].ambient_dim();
    let total: usize = counts.iter().sum();
    let noise_scale = T::lit(sigma / (ambient as f64).sqrt());
    let mut values = DMatrix::<T>::zeros(ambient, total);
    let mut labels = Vec::with_capacity(total);
    let mut col = 0;
    for (k, (basis, &n_k)) in bases.iter().zip(counts).enumerate() {
        let d = basis.dim();
        for _ in 0..n_k {
            let coef = loop {
                let a = DVector::<T>::from_fn(d, |_, _| gaussian(rng));
                let norm = a.norm();
                if norm > T::zero() {
                    break a / norm;
                }
            };
            let noise = DVector::<T>::from_fn(ambient, |_, _| gaussian(rng));
            let x = basis.matrix() * coef + noise * noise_scale;
            values.set_column(col, &x);
            labels.push(k);
            col += 1;
        }
    }
    Ok((DataMatrix::new(values)?, Labeling::new(labels)))
}

fn check_counts(counts: &[usize]) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidParameter(format!("cluster {k} has no points")));
    }
    Ok(())
}

/// Independent uniformly random subspaces of dimensions `dims` in `R^ambient`
/// with `counts[k]` points each. Coefficients are uniform on the unit sphere
/// and noise is `N(0, sigma²/D I)`.
pub fn gen_random_uos<T: Real>(
    ambient: usize,
    dims: &[usize],
    counts: &[usize],
    sigma: f64,
    seed: &SeedSpec,
) -> Result<ProblemInstance<T>> {
    check_counts(counts)?;
    check_sigma(sigma)?;
    if dims.len() != counts.len() {
        return Err(Error::LengthMismatch {
            expected: counts.len(),
            found: dims.len(),
        });
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0 || d > ambient) {
        return Err(Error::InvalidDimension(format!(
            "subspace dimension {d} must lie in 1..={ambient}"
        )));
    }
    let mut rng = seed.derive(GENERATOR_TAG).rng();
    let bases = dims
        .iter()
        .map(|&d| sample_stiefel_from(ambient, d, &mut rng))
        .collect::<Result<Vec<SubspaceBasis<T>>>>()?;
    let (data, true_labels) = sample_points(&bases, counts, sigma, &mut rng)?;
    Ok(ProblemInstance {
        data,
        true_labels,
        true_bases: bases,
        noise_sigma: sigma,
        missing_mask: None,
        generator_config: GeneratorConfig::RandomUos {
            ambient,
            dims: dims.to_vec(),
            counts: counts.to_vec(),
            sigma,
            seed: *seed,
        },
    })
}

/// Three subspaces `span(W₀)`, `span(W₀ cos θ + W₁ sin θ)` and
/// `span(W₀ cos θ + W₂ sin θ)` built from one random `St(D, 3d)` draw.
pub fn gen_angled_uos<T: Real>(
    ambient: usize,
    angle: AngleSpec,
    counts: &[usize],
    sigma: f64,
    seed: &SeedSpec,
) -> Result<ProblemInstance<T>> {
    let AngleSpec { theta, shared_dim: d } = AngleSpec::new(angle.theta, angle.shared_dim)?;
    check_counts(counts)?;
    check_sigma(sigma)?;
    if counts.len() != 3 {
        return Err(Error::LengthMismatch {
            expected: 3,
            found: counts.len(),
        });
    }
    if ambient < 3 * d {
        return Err(Error::Infeasible(format!(
            "angled construction needs D >= 3d (D = {ambient}, d = {d})"
        )));
    }
    let mut rng = seed.derive(GENERATOR_TAG).rng();
    let w = sample_stiefel_from::<T, _>(ambient, 3 * d, &mut rng)?.into_inner();
    let (c, s) = (T::lit(theta.cos()), T::lit(theta.sin()));
    let w0 = w.columns(0, d).into_owned();
    let u2 = &w0 * c + w.columns(d, d) * s;
    let u3 = &w0 * c + w.columns(2 * d, d) * s;

    let tol = T::ORTHO_TOL;
    for u in [&u2, &u3] {
        for sv in w0.tr_mul(u).singular_values().iter() {
            if (sv.as_f64() - theta.cos()).abs() > tol {
                return Err(Error::Infeasible(format!(
                    "constructed singular value {sv} differs from cos(theta) = {}",
                    theta.cos()
                )));
            }
        }
    }
    let bases = vec![SubspaceBasis::new(w0)?, SubspaceBasis::new(u2)?, SubspaceBasis::new(u3)?];
    let (data, true_labels) = sample_points(&bases, counts, sigma, &mut rng)?;
    Ok(ProblemInstance {
        data,
        true_labels,
        true_bases: bases,
        noise_sigma: sigma,
        missing_mask: None,
        generator_config: GeneratorConfig::AngledUos {
            ambient,
            dim: d,
            theta,
            counts: counts.to_vec(),
            sigma,
            seed: *seed,
        },
    })
}

/// Zeroes exactly `s` uniformly chosen coordinates of every point.
pub fn apply_missing<T: Real>(instance: &ProblemInstance<T>, s: usize, seed: &SeedSpec) -> Result<ProblemInstance<T>> {
    let ambient = instance.data.ambient_dim();
    if s >= ambient {
        return Err(Error::InvalidParameter(format!("s = {s} must be below D = {ambient}")));
    }
    let mut rng = seed.derive(MISSING_TAG).rng();
    let mut data = instance.data.clone();
    let mut masks = Vec::with_capacity(data.n_points());
    for j in 0..data.n_points() {
        let mut rows = sample(&mut rng, ambient, s).into_vec();
        rows.sort_unstable();
        for &r in &rows {
            data.values_mut()[(r, j)] = T::zero();
        }
        masks.push(rows);
    }
    let mut out = instance.clone();
    out.data = DataMatrix::new(data.into_inner())?;
    out.missing_mask = Some(masks);
    out.generator_config = GeneratorConfig::Masked {
        base: Box::new(instance.generator_config.clone()),
        s,
        seed: *seed,
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::subspace_affinity;

    fn max_residual(inst: &ProblemInstance<f64>) -> f64 {
        (0..inst.data.n_points())
            .map(|j| {
                let l = inst.true_labels.get(j);
                inst.true_bases[l].residual(inst.data.point(j)).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn noiseless_points_lie_on_unit_spheres_of_their_subspaces() {
        let inst = gen_random_uos::<f64>(100, &[3; 4], &[100; 4], 0.0, &SeedSpec::new(1, 0)).unwrap();
        assert_eq!(inst.data.n_points(), 400);
        assert!(max_residual(&inst) <= 1e-9);
        for j in 0..400 {
            assert!((inst.data.point(j).norm() - 1.0).abs() <= 1e-9);
        }
        assert_eq!(inst.true_labels.counts(4), vec![100; 4]);
    }

    #[test]
    fn mixed_dimensions_and_histogram() {
        let inst = gen_random_uos::<f64>(12, &[1, 4, 2], &[5, 9, 3], 0.0, &SeedSpec::new(2, 0)).unwrap();
        assert_eq!(inst.true_labels.counts(3), vec![5, 9, 3]);
        let dims: Vec<_> = inst.true_bases.iter().map(|b| b.dim()).collect();
        assert_eq!(dims, vec![1, 4, 2]);
        assert!(max_residual(&inst) <= 1e-9);
    }

    #[test]
    fn random_rejects_bad_input() {
        let s = SeedSpec::new(0, 0);
        assert!(matches!(gen_random_uos::<f64>(3, &[4], &[2], 0.0, &s), Err(Error::InvalidDimension(_))));
        assert!(gen_random_uos::<f64>(3, &[1, 1], &[2], 0.0, &s).is_err());
        assert!(gen_random_uos::<f64>(3, &[1], &[0], 0.0, &s).is_err());
        assert!(gen_random_uos::<f64>(3, &[1], &[2], -1.0, &s).is_err());
    }

    #[test]
    fn seeds_determine_instances() {
        let a = gen_random_uos::<f64>(10, &[2, 3], &[7, 7], 0.1, &SeedSpec::new(5, 0)).unwrap();
        let b = gen_random_uos::<f64>(10, &[2, 3], &[7, 7], 0.1, &SeedSpec::new(5, 0)).unwrap();
        let c = gen_random_uos::<f64>(10, &[2, 3], &[7, 7], 0.1, &SeedSpec::new(5, 1)).unwrap();
        assert_eq!(a.data.values(), b.data.values());
        assert_ne!(a.data.values()[(0, 0)], c.data.values()[(0, 0)]);
    }

    #[test]
    fn generator_stream_is_separate_from_plain_stream() {
        let seed = SeedSpec::new(5, 0);
        let inst = gen_random_uos::<f64>(10, &[2], &[3], 0.0, &seed).unwrap();
        let plain = crate::geometry::sample_stiefel::<f64>(10, 2, &seed).unwrap();
        assert_ne!(inst.true_bases[0].matrix(), plain.matrix());
    }

    #[test]
    fn noise_energy_matches_variance() {
        // E‖e‖² = σ², Var‖e‖² = 2σ⁴/D for e ~ N(0, σ²/D I).
        let sigma2 = 0.05f64;
        let (ambient, n) = (100, 2000);
        let clean = gen_random_uos::<f64>(ambient, &[5], &[n], 0.0, &SeedSpec::new(3, 0)).unwrap();
        let noisy = gen_random_uos::<f64>(ambient, &[5], &[n], sigma2.sqrt(), &SeedSpec::new(3, 0)).unwrap();
        let diff = noisy.data.values() - clean.data.values();
        let mean = diff.column_iter().map(|c| c.norm_squared()).sum::<f64>() / n as f64;
        let stderr = (2.0 * sigma2 * sigma2 / ambient as f64 / n as f64).sqrt();
        assert!((mean - sigma2).abs() <= 3.0 * stderr, "{mean}");
    }

    #[test]
    fn angled_affinity_equals_cosine() {
        let inst = gen_angled_uos::<f64>(100, AngleSpec::new(0.4, 10).unwrap(), &[500; 3], 0.0, &SeedSpec::new(4, 0)).unwrap();
        let b = &inst.true_bases;
        for other in [&b[1], &b[2]] {
            let aff = subspace_affinity(b[0].matrix(), other.matrix()).unwrap();
            assert!((aff - 0.4f64.cos()).abs() <= 1e-9);
        }
        assert!(max_residual(&inst) <= 1e-9);
    }

    #[test]
    fn right_angle_gives_orthogonal_lines() {
        let inst = gen_angled_uos::<f64>(3, AngleSpec::new(std::f64::consts::FRAC_PI_2, 1).unwrap(), &[4; 3], 0.0, &SeedSpec::new(6, 0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let a = subspace_affinity(inst.true_bases[i].matrix(), inst.true_bases[j].matrix()).unwrap();
                    assert!(a.abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn tiny_angle_singular_values() {
        let theta = 1e-3f64;
        let inst = gen_angled_uos::<f64>(30, AngleSpec::new(theta, 4).unwrap(), &[2; 3], 0.0, &SeedSpec::new(7, 0)).unwrap();
        let sv = inst.true_bases[0].matrix().tr_mul(inst.true_bases[1].matrix()).singular_values();
        assert!(sv.iter().all(|&s| s >= theta.cos() - 1e-9));
    }

    #[test]
    fn angled_rejects_bad_input() {
        let s = SeedSpec::new(0, 0);
        assert!(matches!(
            gen_angled_uos::<f64>(5, AngleSpec { theta: 0.3, shared_dim: 2 }, &[2; 3], 0.0, &s),
            Err(Error::Infeasible(_))
        ));
        assert!(AngleSpec::new(0.0, 1).is_err());
        assert!(AngleSpec::new(2.0, 1).is_err());
        assert!(gen_angled_uos::<f64>(9, AngleSpec::new(0.3, 2).unwrap(), &[2; 2], 0.0, &s).is_err());
    }

    #[test]
    fn missing_entries() {
        let inst = gen_random_uos::<f64>(2, &[1, 1], &[10, 10], 0.0, &SeedSpec::new(8, 0)).unwrap();
        let none = apply_missing(&inst, 0, &SeedSpec::new(1, 0)).unwrap();
        assert_eq!(none.data.values(), inst.data.values());
        assert!(none.missing_mask.as_ref().unwrap().iter().all(|m| m.is_empty()));

        let one = apply_missing(&inst, 1, &SeedSpec::new(1, 0)).unwrap();
        for (j, mask) in one.missing_mask.as_ref().unwrap().iter().enumerate() {
            assert_eq!(mask.len(), 1);
            assert_eq!(one.data.values()[(mask[0], j)], 0.0);
            let other = 1 - mask[0];
            assert_eq!(one.data.values()[(other, j)], inst.data.values()[(other, j)]);
        }
        assert!(apply_missing(&inst, 2, &SeedSpec::new(1, 0)).is_err());

        let big = gen_random_uos::<f64>(20, &[3], &[30], 0.0, &SeedSpec::new(9, 0)).unwrap();
        let masked = apply_missing(&big, 7, &SeedSpec::new(2, 0)).unwrap();
        for (j, mask) in masked.missing_mask.as_ref().unwrap().iter().enumerate() {
            assert_eq!(mask.len(), 7);
            assert!(mask.iter().all(|&r| masked.data.values()[(r, j)] == 0.0));
        }
    }

    #[test]
    fn single_precision_instance() {
        let inst = gen_random_uos::<f32>(10, &[2], &[5], 0.0, &SeedSpec::new(1, 0)).unwrap();
        for j in 0..5 {
            assert!((inst.data.point(j).norm() - 1.0).abs() < 1e-5);
        }
    }
}
