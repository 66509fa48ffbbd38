//! Objective evaluation and a slow, independent reference solver.
//!
//! [`evaluate`] computes the exact cost of a mass vector through cached
//! kernel rows. [`oracle_solve`] minimizes the same cost by projected
//! gradient descent with an exact capped-simplex projection; it exists only
//! to certify the SMO solver on small instances and never runs in the
//! compression pipeline.

use serde::{Deserialize, Serialize};

use crate::distinctiveness::DistinctivenessVector;
use crate::kernel::{kernel_row_uncached, KernelRowCache, DEFAULT_CACHE_BYTES};
use crate::scene::SceneModel;
use crate::smo::{initialize, AlphaDistribution, CompressionParams};

/// The cost `J = coverage − tau·distinctiveness` with its two components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `alphaᵀK·alpha`: expected kernel similarity between two points drawn
    /// from alpha. Low values mean the mass is spatially well spread.
    pub coverage: f64,
    /// `dᵀalpha`: expected distinctiveness of a drawn point.
    pub distinctiveness: f64,
    /// `coverage − tau·distinctiveness`, the quantity the solver minimizes.
    pub total: f64,
}

/// Exact objective of `alpha` on a scene. Entries must be non-negative;
/// the box cap is not required, so initialization points, solver output,
/// and truncated selections all evaluate through the same path.
///
/// Only rows with nonzero mass are fetched, and zero-mass terms are skipped
/// inside each dot product; with non-negative entries the skipped terms are
/// exact zeros, so the result is bitwise independent of how sparse the
/// vector is stored.
pub fn evaluate(
    alpha: &[f64],
    scene: &SceneModel,
    scores: &DistinctivenessVector,
    tau: f64,
    sigma: f64,
) -> ObjectiveBreakdown {
    let m = scene.len();
    assert_eq!(alpha.len(), m, "alpha length must equal point count");
    assert_eq!(scores.scores.len(), m, "scores length must equal point count");
    assert!(alpha.iter().all(|&a| a >= 0.0), "alpha entries must be non-negative");
    let support: Vec<usize> = (0..m).filter(|&i| alpha[i] != 0.0).collect();
    let mut cache = KernelRowCache::with_memory_budget(scene, sigma, DEFAULT_CACHE_BYTES);
    let mut coverage = 0.0;
    for &i in &support {
        let row = cache.row(i);
        let mut weighted = 0.0;
        for &j in &support {
            weighted += alpha[j] * row[j];
        }
        coverage += alpha[i] * weighted;
    }
    let mut distinctiveness = 0.0;
    for &i in &support {
        distinctiveness += alpha[i] * scores.scores[i];
    }
    ObjectiveBreakdown {
        coverage,
        distinctiveness,
        total: coverage - tau * distinctiveness,
    }
}

/// Euclidean projection of `y` onto `{x : Σx_i = 1, 0 ≤ x_i ≤ cap}` by
/// bisection on the dual shift: the projection is `clamp(y − λ, 0, cap)`
/// with `λ` chosen so the coordinates sum to 1. The sum is monotone in `λ`,
/// so bisection converges unconditionally; the bracket is tightened until
/// its width is below 1e-15 times the value scale, well past the 1e-12
/// feasibility the oracle needs.
///
/// Requires `cap·len(y) ≥ 1` up to rounding, which holds for every
/// `nu ∈ (0, 1]`; with `nu = 1` exactly, rounding can make the box total
/// fall an ulp short of 1, and the projection degrades gracefully to the
/// all-at-cap corner.
pub fn project_capped_simplex(y: &[f64], cap: f64) -> Vec<f64> {
    let m = y.len();
    assert!(m >= 1, "cannot project an empty vector");
    assert!(cap > 0.0 && cap.is_finite(), "cap must be positive");
    assert!(
        cap * m as f64 >= 1.0 - 1e-9,
        "box too small to reach the simplex"
    );
    let mass = |lambda: f64| -> f64 {
        y.iter().map(|&v| (v - lambda).clamp(0.0, cap)).sum()
    };
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // mass(lo) ≥ 1 ≥ mass(hi): below lo every coordinate caps out, above hi
    // every coordinate clamps to zero.
    let mut lo = y_min - cap - 1.0;
    let mut hi = y_max;
    let scale = 1.0f64.max(lo.abs()).max(hi.abs());
    for _ in 0..200 {
        if hi - lo <= 1e-15 * scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mass(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    y.iter().map(|&v| (v - lambda).clamp(0.0, cap)).collect()
}

/// Independent reference solver: projected gradient descent on the
/// compression QP with a dense Gram matrix. Intended for small instances
/// (the Gram matrix is materialized, so memory is O(m²)).
///
/// The gradient is `2K·alpha − tau·d` and the step size `1/(2B)` with `B`
/// the Gershgorin bound `max_i Σ_j K_ij ≥ λ_max(K)`, which guarantees
/// monotone descent on this convex problem. Starts from the same feasible
/// initialization as the SMO solver and stops after `max_iters` rounds or
/// when successive objectives differ by less than `tol`.
pub fn oracle_solve(
    scene: &SceneModel,
    scores: &DistinctivenessVector,
    params: &CompressionParams,
    max_iters: usize,
    tol: f64,
) -> (AlphaDistribution, ObjectiveBreakdown) {
    params.validate().expect("oracle requires valid params");
    assert!(max_iters >= 1 && tol > 0.0);
    let m = scene.len();
    let d = &scores.scores;
    let gram: Vec<Vec<f64>> = (0..m)
        .map(|i| kernel_row_uncached(scene, i, params.sigma))
        .collect();
    // Dense objective, summed in a fixed order; independent of `evaluate`.
    let objective = |alpha: &[f64]| -> ObjectiveBreakdown {
        let mut coverage = 0.0;
        for i in 0..m {
            let mut row_dot = 0.0;
            for j in 0..m {
                row_dot += gram[i][j] * alpha[j];
            }
            coverage += alpha[i] * row_dot;
        }
        let mut distinctiveness = 0.0;
        for i in 0..m {
            distinctiveness += alpha[i] * d[i];
        }
        ObjectiveBreakdown {
            coverage,
            distinctiveness,
            total: coverage - params.tau * distinctiveness,
        }
    };

    let init = initialize(scores, params.nu, m);
    let cap = init.cap;
    let mut alpha = init.alpha;
    let gershgorin = (0..m)
        .map(|i| gram[i].iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let step = 1.0 / (2.0 * gershgorin);
    let mut last = objective(&alpha).total;
    for _ in 0..max_iters {
        let moved: Vec<f64> = (0..m)
            .map(|i| {
                let mut grad = -params.tau * d[i];
                for j in 0..m {
                    grad += 2.0 * gram[i][j] * alpha[j];
                }
                alpha[i] - step * grad
            })
            .collect();
        alpha = project_capped_simplex(&moved, cap);
        let now = objective(&alpha).total;
        if (last - now).abs() < tol {
            break;
        }
        last = now;
    }
    let breakdown = objective(&alpha);
    (AlphaDistribution { alpha, cap }, breakdown)
}
