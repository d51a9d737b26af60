//! Progressive cutting and tearing of soft-body surfaces.

mod edit;
pub(crate) mod geometry;
mod ops;
mod retri;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::softbody::SoftBodyError;

pub use edit::SNAP_M;
pub use ops::{cut, rebind_particles, split_components, tear_segment, AffectedRegion, CutOutcome, TearFront, TEAR_PROJECT_M, TEAR_REJECT_M};

#[derive(Debug, Error)]
pub enum CutError {
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("invalid tear: {0}")]
    InvalidTear(String),
    #[error("invalid cut path: {0}")]
    InvalidPath(String),
    #[error(transparent)]
    SoftBody(#[from] SoftBodyError),
}

/// One blade pose: the cutting edge from `top` to `bottom`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BladePose {
    pub top: Vec3,
    pub bottom: Vec3,
}

/// A blade sweep. Segment `i` is the quad spanned by poses `i` and `i+1`,
/// so consecutive segments share an edge by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPath {
    poses: Vec<BladePose>,
}

impl CutPath {
    pub fn new(poses: Vec<BladePose>) -> Result<Self, CutError> {
        if poses.len() < 2 {
            return Err(CutError::InvalidPath(format!("need at least 2 blade poses, got {}", poses.len())));
        }
        if poses.iter().any(|p| !p.top.is_finite() || !p.bottom.is_finite()) {
            return Err(CutError::InvalidPath("non-finite blade pose".into()));
        }
        Ok(CutPath { poses })
    }

    /// Straight sweep: the blade `top→bottom` translated by `motion` in `segments` steps.
    pub fn sweep(top: Vec3, bottom: Vec3, motion: Vec3, segments: usize) -> Result<Self, CutError> {
        let n = segments.max(1);
        let poses = (0..=n)
            .map(|i| {
                let d = motion * (i as f64 / n as f64);
                BladePose { top: top + d, bottom: bottom + d }
            })
            .collect();
        CutPath::new(poses)
    }

    pub fn poses(&self) -> &[BladePose] {
        &self.poses
    }

    pub fn segment_count(&self) -> usize {
        self.poses.len() - 1
    }
}

/// Counters for one cut or tear step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CutStats {
    /// Distinct points where mesh edges cross the blade.
    pub intersection_points: usize,
    pub triangles_split: usize,
    pub vertices_added: usize,
    pub vertices_duplicated: usize,
    pub components: usize,
    pub perform_ms: f64,
    pub update_particles_ms: f64,
    pub total_ms: f64,
}

impl CutStats {
    /// Operations per second if the op were the whole frame.
    pub fn fps_equivalent(&self) -> f64 {
        if self.total_ms > 0.0 {
            1000.0 / self.total_ms
        } else {
            f64::INFINITY
        }
    }
}
