//! Particle-layer soft bodies.

pub mod body;
pub mod mesh;
pub mod sampling;

use thiserror::Error;

pub use body::{inverse_distance_weights, Binding, Particle, SoftBody, SoftBodyParams, DEFAULT_DT};
pub use mesh::{edge_key, TriMesh};
pub use sampling::{poisson_sample, tune_radius, SurfacePoint};

#[derive(Debug, Error)]
pub enum SoftBodyError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("OBJ parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("index {index} out of range (len {len})")]
    Range { index: usize, len: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
