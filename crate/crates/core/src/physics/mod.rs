//! Dissected physics: a passive server simulating registered bodies and
//! hosts that only apply the transforms it streams back.

pub mod host;
pub mod message;
pub mod server;
pub mod world;

use thiserror::Error;

pub use host::{host_sync, Host, LocalTransport, TcpTransport, Transport};
pub use message::{Command, PhysicsMessage};
pub use server::{spawn_server, PhysicsServer, ServerConfig, ServerHandle};
pub use world::{Collider, PhysicsDescriptor, PhysicsWorld, WorldConfig};

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("object {0} is already registered")]
    DuplicateId(u32),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("physics server unreachable: {0}")]
    Unreachable(String),
    #[error("server error {code}: {message}")]
    Remote { code: u16, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Deterministic mixed scene: spheres (some stacked so they collide), boxes,
/// capsules and one kinematic platform per ten objects.
pub fn demo_bodies(n: usize) -> Vec<(PhysicsDescriptor, crate::geom::Pose)> {
    use crate::geom::{Pose, Quat, Vec3};
    (0..n)
        .map(|i| {
            let id = i as u32 + 1;
            let col = (i % 5) as f64;
            let row = (i / 5) as f64;
            let base = Vec3::new(col * 0.6, 0.5 + 0.4 * (i % 3) as f64, row * 0.6);
            let tilt = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 1.0).normalized(), 0.3 * (i % 4) as f64);
            let (collider, kinematic, pose) = match i % 10 {
                9 => (Collider::Box { half_extents: Vec3::new(0.3, 0.05, 0.3) }, true, Pose::from_position(base)),
                0 | 3 | 6 => (Collider::Sphere { radius: 0.1 }, false, Pose::from_position(base)),
                // falls onto the sphere below it, slightly off-center
                1 => (Collider::Sphere { radius: 0.08 }, false, Pose::from_position(Vec3::new(col * 0.6 - 0.55, 2.0, row * 0.6 + 0.03))),
                2 | 5 | 8 => (Collider::Box { half_extents: Vec3::new(0.1, 0.07, 0.05) }, false, Pose::new(base, tilt)),
                _ => (Collider::Capsule { radius: 0.05, half_length: 0.12 }, false, Pose::new(base, tilt)),
            };
            let desc = PhysicsDescriptor { id, collider, mass: 0.5 + 0.25 * (i % 4) as f64, friction: 0.4, restitution: 0.2 * (i % 3) as f64, kinematic };
            (desc, pose)
        })
        .collect()
}
