//! Scene data model, validation, JSON/PLY I/O, and a seeded synthetic
//! generator for tests and benchmarks.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// On-disk representations understood by [`load_scene`] and [`save_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneFormat {
    /// Full scene: positions, descriptor pair distances, camera counts.
    Json,
    /// ASCII PLY, positions only (geometry export for external viewers).
    Ply,
}

/// One reconstructed 3D point together with the observations the scoring
/// functions consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    /// Unique identifier, stable across save/load.
    pub id: u64,
    /// Position in scene units (meters for metric reconstructions).
    pub position: [f64; 3],
    /// Descriptor distances over the point's track correspondence pairs.
    /// May be empty; scoring defines how trackless points are handled.
    pub pair_distances: Vec<f64>,
    /// Number of cameras observing the point. At least 1 in a valid scene.
    pub cameras_seen: u32,
}

/// Validated, immutable scene. All downstream modules treat it as read-only;
/// construction is the only place invariants are checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneModel {
    total_cameras: u32,
    descriptor_dim: u32,
    points: Vec<ScenePoint>,
}

/// Errors from scene construction and I/O.
#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("point id {id}: {message}")]
    InvalidPoint { id: u64, message: String },
    #[error("invalid scene: {message}")]
    InvalidScene { message: String },
}

/// Mirror of the JSON schema; deserialized first, then validated into a
/// [`SceneModel`] so no unchecked scene can exist.
#[derive(Deserialize)]
struct RawScene {
    total_cameras: u32,
    descriptor_dim: u32,
    points: Vec<ScenePoint>,
}

impl SceneModel {
    /// Validates and wraps a point set. Rejects empty scenes, duplicate ids,
    /// non-finite positions or distances, negative distances, and camera
    /// counts outside `[1, total_cameras]`.
    pub fn new(
        total_cameras: u32,
        descriptor_dim: u32,
        points: Vec<ScenePoint>,
    ) -> Result<Self, SceneError> {
        if total_cameras == 0 {
            return Err(SceneError::InvalidScene {
                message: "total_cameras must be at least 1".into(),
            });
        }
        if descriptor_dim == 0 {
            return Err(SceneError::InvalidScene {
                message: "descriptor_dim must be at least 1".into(),
            });
        }
        if points.is_empty() {
            return Err(SceneError::InvalidScene {
                message: "scene has no points".into(),
            });
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !seen.insert(p.id) {
                return Err(SceneError::InvalidPoint {
                    id: p.id,
                    message: "duplicate id".into(),
                });
            }
            if p.position.iter().any(|c| !c.is_finite()) {
                return Err(SceneError::InvalidPoint {
                    id: p.id,
                    message: "position has a non-finite component".into(),
                });
            }
            if p.cameras_seen == 0 {
                return Err(SceneError::InvalidPoint {
                    id: p.id,
                    message: "cameras_seen must be at least 1".into(),
                });
            }
            if p.cameras_seen > total_cameras {
                return Err(SceneError::InvalidPoint {
                    id: p.id,
                    message: format!(
                        "cameras_seen {} exceeds total_cameras {}",
                        p.cameras_seen, total_cameras
                    ),
                });
            }
            if let Some(d) = p.pair_distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
                return Err(SceneError::InvalidPoint {
                    id: p.id,
                    message: format!("pair distance {d} is negative or non-finite"),
                });
            }
        }
        Ok(Self {
            total_cameras,
            descriptor_dim,
            points,
        })
    }

    /// Number of points `m`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: empty scenes are rejected at construction.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ScenePoint] {
        &self.points
    }

    pub fn total_cameras(&self) -> u32 {
        self.total_cameras
    }

    pub fn descriptor_dim(&self) -> u32 {
        self.descriptor_dim
    }

    /// Largest `cameras_seen` over all points. At least 1.
    pub fn max_cameras_seen(&self) -> u32 {
        self.points.iter().map(|p| p.cameras_seen).max().unwrap_or(1)
    }
}

/// Loads and validates a scene. JSON carries the full model; PLY carries
/// geometry only, so points get neutral metadata (sequential ids,
/// `cameras_seen = 1`, no pair distances).
pub fn load_scene(path: &Path, format: SceneFormat) -> Result<SceneModel, SceneError> {
    let file = File::open(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    match format {
        SceneFormat::Json => {
            let raw: RawScene =
                serde_json::from_reader(reader).map_err(|e| SceneError::Parse {
                    path: path.to_path_buf(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
            SceneModel::new(raw.total_cameras, raw.descriptor_dim, raw.points)
        }
        SceneFormat::Ply => {
            let positions = read_ply_positions(reader, path)?;
            let points = positions
                .into_iter()
                .enumerate()
                .map(|(i, position)| ScenePoint {
                    id: i as u64,
                    position,
                    pair_distances: Vec::new(),
                    cameras_seen: 1,
                })
                .collect();
            SceneModel::new(1, 1, points)
        }
    }
}

/// Writes a scene to disk. The JSON path round-trips losslessly through
/// [`load_scene`]; the PLY path exports positions only.
pub fn save_scene(scene: &SceneModel, path: &Path, format: SceneFormat) -> Result<(), SceneError> {
    let io_err = |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    match format {
        SceneFormat::Json => {
            serde_json::to_writer(&mut writer, scene).map_err(|e| SceneError::Io {
                path: path.to_path_buf(),
                source: io::Error::other(e),
            })?;
            writer.write_all(b"\n").map_err(io_err)?;
        }
        SceneFormat::Ply => {
            let positions: Vec<[f64; 3]> = scene.points.iter().map(|p| p.position).collect();
            write_ply_positions(&mut writer, &positions).map_err(io_err)?;
        }
    }
    writer.flush().map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes positions as ASCII PLY (`element vertex`, properties x, y, z).
/// Values are printed with shortest round-trip precision, so reading the file
/// back recovers the coordinates exactly.
pub fn write_ply_positions<W: Write>(writer: &mut W, positions: &[[f64; 3]]) -> io::Result<()> {
    writeln!(writer, "ply")?;
    writeln!(writer, "format ascii 1.0")?;
    writeln!(writer, "element vertex {}", positions.len())?;
    writeln!(writer, "property float x")?;
    writeln!(writer, "property float y")?;
    writeln!(writer, "property float z")?;
    writeln!(writer, "end_header")?;
    for p in positions {
        writeln!(writer, "{} {} {}", p[0], p[1], p[2])?;
    }
    Ok(())
}

fn read_ply_positions<R: BufRead>(reader: R, path: &Path) -> Result<Vec<[f64; 3]>, SceneError> {
    let parse_err = |line: usize, message: String| SceneError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let mut read_line = |expect: &str| -> Result<(usize, String), SceneError> {
        match lines.next() {
            Some((idx, Ok(text))) => Ok((idx + 1, text)),
            Some((idx, Err(e))) => Err(parse_err(idx + 1, e.to_string())),
            None => Err(parse_err(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (line_no, magic) = read_line("ply magic")?;
    if magic.trim() != "ply" {
        return Err(parse_err(line_no, "missing ply magic".into()));
    }
    // Header: collect declared elements in order; only ascii 1.0 is supported.
    let mut elements: Vec<(String, usize)> = Vec::new();
    loop {
        let (line_no, text) = read_line("end_header")?;
        let trimmed = text.trim();
        if trimmed == "end_header" {
            break;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match fields.as_slice() {
            ["format", rest @ ..] => {
                if rest != ["ascii", "1.0"] {
                    return Err(parse_err(line_no, format!("unsupported format {trimmed:?}")));
                }
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad element count {count:?}")))?;
                elements.push((name.to_string(), count));
            }
            ["comment", ..] | ["property", ..] | [] => {}
            _ => return Err(parse_err(line_no, format!("unrecognized header line {trimmed:?}"))),
        }
    }

    let mut positions = Vec::new();
    let mut saw_vertex = false;
    for (name, count) in elements {
        if name == "vertex" {
            saw_vertex = true;
            positions.reserve(count);
            for _ in 0..count {
                let (line_no, text) = read_line("vertex record")?;
                let mut coords = [0.0f64; 3];
                let mut fields = text.split_whitespace();
                for (k, slot) in coords.iter_mut().enumerate() {
                    let field = fields
                        .next()
                        .ok_or_else(|| parse_err(line_no, format!("vertex record has {k} of 3 coordinates")))?;
                    *slot = field
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad coordinate {field:?}")))?;
                }
                positions.push(coords);
            }
        } else {
            // Skip the records of elements we do not model (faces, edges).
            for _ in 0..count {
                read_line("element record")?;
            }
        }
    }
    if !saw_vertex {
        return Err(parse_err(0, "no vertex element in header".into()));
    }
    Ok(positions)
}

/// Generates a deterministic synthetic scene.
///
/// Distribution, in point order and with a ChaCha8 stream seeded by `seed`:
/// each position coordinate is uniform over `[0, extent)`; `cameras_seen` is
/// uniform over `{1, ..., num_cameras}`; the point then carries
/// `cameras_seen − 1` pair distances, each uniform over `[0.1, 1.0)` (one per
/// correspondence beyond the first observation, so single-observation points
/// have none). Ids are sequential from 0 and `descriptor_dim` is 128.
///
/// Panics if `num_points` or `num_cameras` is zero or `extent` is not a
/// positive finite number.
pub fn synth_scene(num_points: usize, num_cameras: u32, extent: f64, seed: u64) -> SceneModel {
    assert!(num_points >= 1, "num_points must be at least 1");
    assert!(num_cameras >= 1, "num_cameras must be at least 1");
    assert!(
        extent > 0.0 && extent.is_finite(),
        "extent must be positive and finite"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..num_points)
        .map(|i| {
            let position = [
                rng.random_range(0.0..extent),
                rng.random_range(0.0..extent),
                rng.random_range(0.0..extent),
            ];
            let cameras_seen = rng.random_range(1..=num_cameras);
            let pair_distances = (1..cameras_seen)
                .map(|_| rng.random_range(0.1..1.0))
                .collect();
            ScenePoint {
                id: i as u64,
                position,
                pair_distances,
                cameras_seen,
            }
        })
        .collect();
    SceneModel::new(num_cameras, 128, points).expect("synthetic scene satisfies all invariants")
}
