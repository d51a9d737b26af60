//! Minimal deterministic rigid-body world: gravity, a ground plane at y=0,
//! primitive-vs-plane and sphere-sphere impulses, id-ordered processing.
//! Orientation is not integrated; only kinematic targets rotate bodies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PhysicsError;
use crate::geom::{Motor, Pose, Vec3};

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_DT: f64 = 1.0 / 60.0;
/// Bodies slower than this for [`SLEEP_STEPS`] consecutive steps go to sleep.
pub const SLEEP_SPEED: f64 = 1e-3;
pub const SLEEP_STEPS: u32 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Collider {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: Vec3,
    },
    /// Axis along the body's local y.
    Capsule {
        radius: f64,
        half_length: f64,
    },
}

impl Collider {
    /// Half-height of the collider along world y for orientation `pose`.
    fn extent_y(&self, pose: &Pose) -> f64 {
        match *self {
            Collider::Sphere { radius } => radius,
            Collider::Box { half_extents: h } => {
                let r = pose.orientation.to_rotation_matrix();
                r[1][0].abs() * h.x + r[1][1].abs() * h.y + r[1][2].abs() * h.z
            }
            Collider::Capsule { radius, half_length } => pose.orientation.rotate(Vec3::Y).y.abs() * half_length + radius,
        }
    }

    fn valid(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Collider::Sphere { radius } => pos(radius),
            Collider::Box { half_extents: h } => pos(h.x) && pos(h.y) && pos(h.z),
            Collider::Capsule { radius, half_length } => pos(radius) && pos(half_length),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsDescriptor {
    pub id: u32,
    pub collider: Collider,
    pub mass: f64,
    pub friction: f64,
    pub restitution: f64,
    pub kinematic: bool,
}

impl PhysicsDescriptor {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !self.collider.valid() {
            return Err(PhysicsError::InvalidDescriptor(format!("object {}: collider dimensions must be > 0", self.id)));
        }
        if !self.kinematic && !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(PhysicsError::InvalidDescriptor(format!("object {}: mass must be > 0 unless kinematic", self.id)));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) || !(0.0..=1.0).contains(&self.restitution) {
            return Err(PhysicsError::InvalidDescriptor(format!("object {}: friction must be >= 0 and restitution in [0, 1]", self.id)));
        }
        Ok(())
    }

    fn inv_mass(&self) -> f64 {
        if self.kinematic {
            0.0
        } else {
            1.0 / self.mass
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub desc: PhysicsDescriptor,
    pub pose: Pose,
    pub velocity: Vec3,
    pub sleeping: bool,
    pub slow_steps: u32,
}

impl Body {
    pub fn motor(&self) -> Motor {
        Motor::from_pose(&self.pose).unwrap_or(Motor::IDENTITY)
    }

    fn wake(&mut self) {
        self.sleeping = false;
        self.slow_steps = 0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub dt: f64,
    pub gravity: f64,
    pub ground: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { dt: DEFAULT_DT, gravity: GRAVITY, ground: true }
    }
}

/// One session's simulation state: exactly the descriptors plus dynamic state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysicsWorld {
    pub config: WorldConfig,
    pub tick: u64,
    pub bodies: BTreeMap<u32, Body>,
}

impl PhysicsWorld {
    pub fn new(config: WorldConfig) -> Self {
        PhysicsWorld { config, tick: 0, bodies: BTreeMap::new() }
    }

    pub fn register(&mut self, desc: PhysicsDescriptor, pose: Pose) -> Result<(), PhysicsError> {
        desc.validate()?;
        if !pose.is_valid() || !pose.position.is_finite() {
            return Err(PhysicsError::InvalidDescriptor(format!("object {}: invalid initial pose", desc.id)));
        }
        if self.bodies.contains_key(&desc.id) {
            return Err(PhysicsError::DuplicateId(desc.id));
        }
        self.bodies.insert(desc.id, Body { desc, pose, velocity: Vec3::ZERO, sleeping: false, slow_steps: 0 });
        Ok(())
    }

    pub fn unregister(&mut self, id: u32) -> bool {
        self.bodies.remove(&id).is_some()
    }

    /// Instantaneous impulse (N·s). Returns false for unknown or kinematic ids.
    pub fn apply_impulse(&mut self, id: u32, impulse: Vec3) -> bool {
        match self.bodies.get_mut(&id) {
            Some(b) if !b.desc.kinematic => {
                b.velocity += impulse * b.desc.inv_mass();
                b.wake();
                true
            }
            _ => false,
        }
    }

    /// Kinematic bodies jump to the target; returns false otherwise.
    pub fn set_kinematic_target(&mut self, id: u32, pose: Pose) -> bool {
        match self.bodies.get_mut(&id) {
            Some(b) if b.desc.kinematic && pose.is_valid() => {
                b.pose = pose;
                b.wake();
                true
            }
            _ => false,
        }
    }

    pub fn step(&mut self) {
        let WorldConfig { dt, gravity, ground } = self.config;
        for b in self.bodies.values_mut() {
            if b.desc.kinematic || b.sleeping {
                continue;
            }
            // semi-implicit Euler
            b.velocity.y -= gravity * dt;
            b.pose.position += b.velocity * dt;
            if ground {
                ground_contact(b);
            }
        }
        self.sphere_contacts();
        for b in self.bodies.values_mut() {
            if b.desc.kinematic || b.sleeping {
                continue;
            }
            if b.velocity.norm() < SLEEP_SPEED {
                b.slow_steps += 1;
                if b.slow_steps >= SLEEP_STEPS {
                    b.sleeping = true;
                    b.velocity = Vec3::ZERO;
                }
            } else {
                b.slow_steps = 0;
            }
        }
        self.tick += 1;
    }

    fn sphere_contacts(&mut self) {
        let spheres: Vec<u32> = self.bodies.iter().filter(|(_, b)| matches!(b.desc.collider, Collider::Sphere { .. })).map(|(&id, _)| id).collect();
        for (i, &a) in spheres.iter().enumerate() {
            for &b in &spheres[i + 1..] {
                let (ba, bb) = (&self.bodies[&a], &self.bodies[&b]);
                if (ba.sleeping || ba.desc.kinematic) && (bb.sleeping || bb.desc.kinematic) {
                    continue;
                }
                let (Collider::Sphere { radius: ra }, Collider::Sphere { radius: rb }) = (ba.desc.collider, bb.desc.collider) else { unreachable!() };
                let d = bb.pose.position - ba.pose.position;
                let dist = d.norm();
                let depth = ra + rb - dist;
                let (wa, wb) = (ba.desc.inv_mass(), bb.desc.inv_mass());
                if depth <= 0.0 || wa + wb == 0.0 {
                    continue;
                }
                let n = if dist > 1e-12 { d * (1.0 / dist) } else { Vec3::Y };
                let vrel = (bb.velocity - ba.velocity).dot(n);
                let e = ba.desc.restitution.min(bb.desc.restitution);
                let j = if vrel < 0.0 { -(1.0 + e) * vrel / (wa + wb) } else { 0.0 };
                let corr = depth / (wa + wb);
                let a_body = self.bodies.get_mut(&a).expect("sphere");
                a_body.velocity -= n * (j * wa);
                a_body.pose.position -= n * (corr * wa);
                if wa > 0.0 {
                    a_body.wake();
                }
                let b_body = self.bodies.get_mut(&b).expect("sphere");
                b_body.velocity += n * (j * wb);
                b_body.pose.position += n * (corr * wb);
                if wb > 0.0 {
                    b_body.wake();
                }
            }
        }
    }

    pub fn transforms(&self) -> Vec<(u32, Motor)> {
        self.bodies.iter().filter(|(_, b)| !b.sleeping).map(|(&id, b)| (id, b.motor())).collect()
    }

    pub fn position(&self, id: u32) -> Option<Vec3> {
        self.bodies.get(&id).map(|b| b.pose.position)
    }
}

fn ground_contact(b: &mut Body) {
    let depth = b.desc.collider.extent_y(&b.pose) - b.pose.position.y;
    if depth <= 0.0 {
        return;
    }
    b.pose.position.y += depth;
    if b.velocity.y < 0.0 {
        let vn = -b.velocity.y;
        b.velocity.y = b.desc.restitution * vn;
        // Coulomb friction on the tangential velocity
        let vt = Vec3::new(b.velocity.x, 0.0, b.velocity.z);
        let speed = vt.norm();
        if speed > 0.0 {
            let dv = (b.desc.friction * (1.0 + b.desc.restitution) * vn).min(speed);
            let keep = 1.0 - dv / speed;
            b.velocity.x *= keep;
            b.velocity.z *= keep;
        }
    }
}
