//! Sparse compression of SfM point clouds for visual localization.
//!
//! The toolkit selects a small, visually distinctive, spatially well-spread
//! subset of a reconstructed scene. The selection is the support of a
//! probability distribution `alpha` minimizing
//!
//! ```text
//! J(alpha) = alphaᵀ K alpha − tau · dᵀ alpha
//! ```
//!
//! over the capped simplex `{ alpha : Σ alpha_i = 1, 0 ≤ alpha_i ≤ 1/(nu·m) }`,
//! where `K` is a Gaussian RBF kernel over point positions and `d` holds
//! per-point visual distinctiveness scores. A sequential-minimal-optimization
//! solver updates one coordinate pair per iteration, fetching kernel rows
//! through a bounded LRU cache so the m×m Gram matrix is never materialized.
//!
//! Modules mirror the pipeline: [`scene`] (data model and I/O),
//! [`distinctiveness`] (the score vector `d`), [`kernel`] (RBF rows and
//! cache), [`smo`] (the solver), [`objective`] (evaluation and a slow
//! reference solver), [`compress`] (end-to-end pipeline).

use thiserror::Error;

pub mod compress;
pub mod distinctiveness;
pub mod kernel;
pub mod objective;
pub mod scene;
pub mod smo;

pub use compress::{
    compress, compress_with, extract_support, load_compressed_json, save_compressed_json,
    CompressError, CompressOptions, CompressedScene, CompressionOutput, SelectedPoint,
};
pub use distinctiveness::{
    default_beta, score_avg_distance, score_camera_fraction, score_camera_max_fraction,
    score_combination, score_scene, DistinctivenessVector, ScoreConfig, ScoreKind,
};
pub use kernel::{rbf, KernelRowCache, DEFAULT_CACHE_BYTES};
pub use objective::{evaluate, oracle_solve, project_capped_simplex, ObjectiveBreakdown};
pub use scene::{load_scene, save_scene, synth_scene, SceneError, SceneFormat, SceneModel, ScenePoint};
pub use smo::{initialize, min_support_count, solve, AlphaDistribution, CompressionParams, PairStrategy, Solver};

/// A parameter outside its documented range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{name} must be {requirement} (got {got})")]
pub struct InvalidParam {
    /// Parameter name as spelled in the API and CLI.
    pub name: &'static str,
    /// Human-readable description of the valid range.
    pub requirement: &'static str,
    /// Offending value, cast to f64 for display.
    pub got: f64,
}
