//! End-to-end compression: score the scene, run the solver, threshold the
//! mass vector, and record the selection with its exact objective.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distinctiveness::{score_scene, DistinctivenessVector};
use crate::kernel::DEFAULT_CACHE_BYTES;
use crate::objective::{evaluate, ObjectiveBreakdown};
use crate::scene::SceneModel;
use crate::smo::{min_support_count, AlphaDistribution, CompressionParams, Solver};
use crate::InvalidParam;

/// One retained point: its stable id and the mass the solver assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedPoint {
    pub id: u64,
    pub mass: f64,
}

/// The result of compressing a scene. `objective` is the exact cost of the
/// recorded selection (small masses already truncated), so re-evaluating
/// the selection against the source scene reproduces it bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedScene {
    /// Point count of the source scene.
    pub source_m: usize,
    /// Parameters the selection was produced with.
    pub params: CompressionParams,
    /// Cost of the truncated selection, not of the raw solver state.
    pub objective: ObjectiveBreakdown,
    /// Sorted by mass descending, ties by id ascending. Ids are unique and
    /// drawn from the source scene; masses sum to 1 minus at most the
    /// truncation threshold times the point count.
    pub selected: Vec<SelectedPoint>,
}

/// Knobs that do not affect which optimum is sought, only how the run is
/// executed and reported.
#[derive(Debug, Clone, Copy)]
pub struct CompressOptions {
    /// Truncation threshold as a fraction of the box cap: entries with
    /// `alpha_i > factor·cap` are retained.
    pub support_threshold_factor: f64,
    /// Kernel row cache budget in bytes.
    pub cache_bytes: usize,
    /// Log progress every this many iterations; 0 disables logging.
    pub log_every: u64,
    /// Also snapshot the selection before any solver step runs.
    pub emit_initial: bool,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self {
            support_threshold_factor: 1e-8,
            cache_bytes: DEFAULT_CACHE_BYTES,
            log_every: 0,
            emit_initial: false,
        }
    }
}

/// A compression run: the final selection, plus the pre-solve snapshot when
/// requested.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionOutput {
    pub compressed: CompressedScene,
    pub initial: Option<CompressedScene>,
}

#[derive(Debug, Error)]
pub enum CompressError {
    #[error(transparent)]
    Param(#[from] InvalidParam),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Indices with mass strictly above `threshold`, ascending. Pure
/// thresholding; the minimum-support guarantee lives in [`compress_with`].
pub fn extract_support(dist: &AlphaDistribution, threshold: f64) -> Vec<usize> {
    (0..dist.len()).filter(|&i| dist.alpha[i] > threshold).collect()
}

/// Compresses with default options. See [`compress_with`].
pub fn compress(
    scene: &SceneModel,
    params: &CompressionParams,
) -> Result<CompressedScene, CompressError> {
    Ok(compress_with(scene, params, &CompressOptions::default())?.compressed)
}

/// Scores the scene, runs the solver for `params.iterations` steps, and
/// records the thresholded selection. When truncation would leave fewer
/// than the minimum support count, the largest remaining positive masses
/// are kept as well, so `selected.len() >= ceil(nu·m)` always holds.
pub fn compress_with(
    scene: &SceneModel,
    params: &CompressionParams,
    options: &CompressOptions,
) -> Result<CompressionOutput, CompressError> {
    let scores = score_scene(scene, &params.score)?;
    let mut solver = Solver::new(scene, &scores, params, options.cache_bytes)?;
    let initial = options
        .emit_initial
        .then(|| snapshot(scene, &scores, params, solver.alpha(), solver.cap(), options));
    solver.run_logged(options.log_every);
    let compressed = snapshot(scene, &scores, params, solver.alpha(), solver.cap(), options);
    Ok(CompressionOutput { compressed, initial })
}

/// Thresholds `alpha`, tops the selection back up to the minimum support
/// count if truncation cut below it, and evaluates the truncated vector.
fn snapshot(
    scene: &SceneModel,
    scores: &DistinctivenessVector,
    params: &CompressionParams,
    alpha: &[f64],
    cap: f64,
    options: &CompressOptions,
) -> CompressedScene {
    let m = scene.len();
    let threshold = options.support_threshold_factor * cap;
    let mut keep: Vec<usize> = (0..m).filter(|&i| alpha[i] > threshold).collect();
    let need = min_support_count(params.nu, m);
    if keep.len() < need {
        // The feasible set forces at least `need` positive entries, so
        // ranking by mass refills the selection without inventing points.
        let mut ranked: Vec<usize> = (0..m).filter(|&i| alpha[i] > 0.0).collect();
        ranked.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
        ranked.truncate(need);
        keep = ranked;
        keep.sort_unstable();
    }
    let mut truncated = vec![0.0; m];
    for &i in &keep {
        truncated[i] = alpha[i];
    }
    let objective = evaluate(&truncated, scene, scores, params.tau, params.sigma);
    let mut selected: Vec<SelectedPoint> = keep
        .iter()
        .map(|&i| SelectedPoint {
            id: scene.points()[i].id,
            mass: alpha[i],
        })
        .collect();
    selected.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(a.id.cmp(&b.id)));
    CompressedScene {
        source_m: m,
        params: *params,
        objective,
        selected,
    }
}

/// Writes a compressed scene as single-line JSON with a trailing newline.
pub fn save_compressed_json(
    path: &Path,
    compressed: &CompressedScene,
) -> Result<(), CompressError> {
    let file = File::create(path).map_err(|e| CompressError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, compressed).map_err(|e| CompressError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    writer.write_all(b"\n").map_err(|e| CompressError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    writer.flush().map_err(|e| CompressError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads a compressed scene back. Masses round-trip bitwise.
pub fn load_compressed_json(path: &Path) -> Result<CompressedScene, CompressError> {
    let file = File::open(path).map_err(|e| CompressError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CompressError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
