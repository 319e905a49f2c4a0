use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("point ({x:.3}, {y:.3}) is outside the heightfield footprint")]
    OutOfBounds { x: f64, y: f64 },
    #[error("voxel grid is empty")]
    EmptyGrid,
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(f64, f64),
    #[error("no walkable voxel within {radius:.3} m of seed ({x:.3}, {y:.3}, {z:.3})")]
    SeedNotWalkable { x: f64, y: f64, z: f64, radius: f64 },
    #[error("seed ({x:.3}, {y:.3}, {z:.3}) does not project onto the navmesh")]
    SeedOffMesh { x: f64, y: f64, z: f64 },
    #[error("non-convex polygon {0}")]
    NonConvex(usize),
    #[error("non-planar polygon {0}")]
    NonPlanar(usize),
    #[error("edge ({0}, {1}) is shared by more than two polygons")]
    NonManifold(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("policy file: {0}")]
    Policy(String),
    #[error("training diverged at episode {episode}: mean |Q| = {mean_abs_q:e}")]
    Diverged { episode: usize, mean_abs_q: f64 },
    #[error("replay buffer holds {len} transitions, batch needs {needed}")]
    Underfull { len: usize, needed: usize },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("defect injection {0} touches the seed polygon")]
    InjectionTouchesSeed(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
