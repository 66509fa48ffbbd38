//! Per-point visual distinctiveness scores, the vector `d` in the objective.
//!
//! Four variants: average descriptor distance mapped through a decaying
//! exponential, two camera-frequency ratios, and a convex combination of the
//! distance score with the max-frequency score. All scores live in `[0, 1]`
//! and are index-aligned with the scene's point order.

use serde::{Deserialize, Serialize};

use crate::scene::SceneModel;
use crate::InvalidParam;

/// Length-m score vector aligned with `SceneModel::points()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctivenessVector {
    /// Entries in `[0, 1]`, finite.
    pub scores: Vec<f64>,
}

/// Which scoring function to run, as selected on the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    AvgDistance,
    CameraFraction,
    CameraMaxFraction,
    Combination,
}

impl ScoreKind {
    /// CLI spelling, also used in emitted JSON.
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::AvgDistance => "avg-distance",
            ScoreKind::CameraFraction => "camera-fraction",
            ScoreKind::CameraMaxFraction => "camera-max-fraction",
            ScoreKind::Combination => "combination",
        }
    }
}

/// Scoring configuration: the variant plus its two parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub kind: ScoreKind,
    /// Normalization for the avg-distance exponential. `None` selects the
    /// scale-free default: the mean pair distance over the whole scene.
    pub beta: Option<f64>,
    /// Weight of the avg-distance term in the combination score.
    pub weight: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            kind: ScoreKind::AvgDistance,
            beta: None,
            weight: 0.5,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        if let Some(beta) = self.beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(InvalidParam {
                    name: "beta",
                    requirement: "positive and finite",
                    got: beta,
                });
            }
        }
        if !(self.weight >= 0.0 && self.weight <= 1.0) {
            return Err(InvalidParam {
                name: "weight",
                requirement: "in [0, 1]",
                got: self.weight,
            });
        }
        Ok(())
    }
}

/// Runs the configured scoring function, resolving the `beta` default from
/// the scene when unset.
pub fn score_scene(
    scene: &SceneModel,
    config: &ScoreConfig,
) -> Result<DistinctivenessVector, InvalidParam> {
    config.validate()?;
    let beta = || config.beta.unwrap_or_else(|| default_beta(scene));
    Ok(match config.kind {
        ScoreKind::AvgDistance => score_avg_distance(scene, beta()),
        ScoreKind::CameraFraction => score_camera_fraction(scene),
        ScoreKind::CameraMaxFraction => score_camera_max_fraction(scene),
        ScoreKind::Combination => score_combination(scene, beta(), config.weight),
    })
}

/// Default `beta`: the mean pair distance over every correspondence pair in
/// the scene, which makes the exponential scale-free. Falls back to 1.0 for
/// scenes with no pairs at all.
pub fn default_beta(scene: &SceneModel) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in scene.points() {
        for d in &p.pair_distances {
            sum += d;
            count += 1;
        }
    }
    if count == 0 {
        log::warn!("scene has no correspondence pairs; beta defaults to 1.0");
        1.0
    } else {
        sum / count as f64
    }
}

/// Average-descriptor-distance score: `exp(−mean(pair_distances)/beta)`.
/// A small mean distance means the point's track descriptors agree, so it is
/// likely matchable; the exponential maps that to a high score. Points with
/// no pairs carry no matchability evidence and score 0.
pub fn score_avg_distance(scene: &SceneModel, beta: f64) -> DistinctivenessVector {
    assert!(beta > 0.0 && beta.is_finite(), "beta must be positive");
    let mut trackless = 0usize;
    let scores = scene
        .points()
        .iter()
        .map(|p| {
            if p.pair_distances.is_empty() {
                trackless += 1;
                0.0
            } else {
                let mean: f64 =
                    p.pair_distances.iter().sum::<f64>() / p.pair_distances.len() as f64;
                (-mean / beta).exp()
            }
        })
        .collect();
    if trackless > 0 {
        log::warn!(
            "{trackless} of {} points have no correspondence pairs and score 0",
            scene.len()
        );
    }
    DistinctivenessVector { scores }
}

/// Camera-fraction score: `cameras_seen / total_cameras`. A point seen from
/// many viewpoints matched reliably during reconstruction.
pub fn score_camera_fraction(scene: &SceneModel) -> DistinctivenessVector {
    let total = scene.total_cameras() as f64;
    let scores = scene
        .points()
        .iter()
        .map(|p| p.cameras_seen as f64 / total)
        .collect();
    DistinctivenessVector { scores }
}

/// Max-normalized frequency score: `cameras_seen / max_i cameras_seen`.
/// Normalizes by the best-observed point, so the arg-max scores exactly 1.
pub fn score_camera_max_fraction(scene: &SceneModel) -> DistinctivenessVector {
    let best = scene.max_cameras_seen() as f64;
    let scores = scene
        .points()
        .iter()
        .map(|p| p.cameras_seen as f64 / best)
        .collect();
    DistinctivenessVector { scores }
}

/// Convex combination `w·avg_distance + (1−w)·camera_max_fraction`. The
/// endpoints reproduce the two component scores bit-for-bit.
pub fn score_combination(scene: &SceneModel, beta: f64, weight: f64) -> DistinctivenessVector {
    assert!((0.0..=1.0).contains(&weight), "weight must be in [0, 1]");
    let avg = score_avg_distance(scene, beta);
    let freq = score_camera_max_fraction(scene);
    let scores = avg
        .scores
        .iter()
        .zip(&freq.scores)
        .map(|(d, f)| weight * d + (1.0 - weight) * f)
        .collect();
    DistinctivenessVector { scores }
}
