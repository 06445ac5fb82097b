//! Subspace clustering with ensembles of K-subspaces (EKSS), its one-shot
//! variant EKSS-0, thresholded subspace clustering (TSC), a union-of-subspaces
//! data generator and the metrics used to evaluate them.
//!
//! The numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below are the double-precision instantiations used by the CLI.

pub mod affinity;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod kss;
pub mod scalar;
pub mod spectral;
pub mod synth;

pub use affinity::{
    accumulate, ekss, ekss0, ekss_coassociation, thresh, tsc, tsc_affinity, CoAssociationBuilder,
    CoAssociationMatrix, EnsembleConfig, EnsembleOutput, TscWeights,
};
pub use error::{Error, Result};
pub use eval::{
    angular_separation, clustering_error, estimate_f, masked_ratio, max_weight_assignment, nfc_check,
    subspace_affinity, CoClusterEstimate, MetricReport, NfcReport, MASK_BUDGET,
};
pub use geometry::{pca_basis, projection_energy, sample_stiefel, DataMatrix, SeedSpec, SubspaceBasis};
pub use kss::{assign_by_projection, kss_cost, kss_weight, run_kss, EmptyClusterPolicy, KssConfig, KssResult, Labeling};
pub use scalar::Real;
pub use spectral::{connected_components, spectral_cluster, Laplacian, SpectralConfig};
pub use synth::{apply_missing, gen_angled_uos, gen_random_uos, AngleSpec, GeneratorConfig, ProblemInstance};

pub type DataMatrix64 = DataMatrix<f64>;
pub type DataMatrix32 = DataMatrix<f32>;
pub type SubspaceBasis64 = SubspaceBasis<f64>;
pub type SubspaceBasis32 = SubspaceBasis<f32>;
pub type CoAssociationMatrix64 = CoAssociationMatrix<f64>;
pub type CoAssociationMatrix32 = CoAssociationMatrix<f32>;
pub type KssResult64 = KssResult<f64>;
pub type KssResult32 = KssResult<f32>;
pub type ProblemInstance64 = ProblemInstance<f64>;
pub type ProblemInstance32 = ProblemInstance<f32>;
