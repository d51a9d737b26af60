#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Headless collaborative training-simulation engine.

pub mod analytics;
pub mod cut;
pub mod geom;
pub mod grasp;
pub mod net;
pub mod physics;
pub mod recorder;
pub mod rng;
pub mod scenegraph;
pub mod sim;
pub mod softbody;

pub use geom::{Motor, Pose, Quat, Vec3};
