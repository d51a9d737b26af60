//! Automatic hand postures: close a hand skeleton from an initial to a
//! final pose, freezing bones as they reach the grasped object.

pub mod contact;
mod solve;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose, Quat, Vec3};

pub use contact::{capsule_mesh_contact, segment_segment, segment_triangle_distance, Capsule, ContactQuery, DEFAULT_CONTACT_OFFSET_M};
pub use solve::{solve_grasp, GraspOptions, GraspResult, BISECTION_ITERATIONS, STEPS};

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Capsule along the bone's local +x axis, starting at its joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoneShape {
    pub radius: f64,
    pub length: f64,
}

/// Per-axis Euler clamp in degrees, `R = Rz·Ry·Rx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub min_deg: [f64; 3],
    pub max_deg: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Local transform relative to the parent joint; movement rotations
    /// are applied on top of `rest.orientation`.
    pub rest: Pose,
    #[serde(default)]
    pub bone: Option<BoneShape>,
    #[serde(default)]
    pub limits: Option<JointLimits>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandSkeleton {
    pub joints: Vec<Joint>,
}

/// Initial and final local rotations keyed by joint name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspMovement {
    pub initial: BTreeMap<String, Quat>,
    #[serde(rename = "final")]
    pub final_pose: BTreeMap<String, Quat>,
}

/// Skeleton and movement as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspFile {
    pub skeleton: HandSkeleton,
    pub movement: GraspMovement,
}

impl GraspFile {
    pub fn from_json(s: &str) -> Result<Self, GraspError> {
        let f: GraspFile = serde_json::from_str(s)?;
        f.skeleton.validate()?;
        f.movement.check(&f.skeleton)?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, GraspError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl HandSkeleton {
    /// One root, parents in range, no cycles, positive capsule radii.
    pub fn validate(&self) -> Result<(), GraspError> {
        let n = self.joints.len();
        if n == 0 {
            return Err(GraspError::Schema("skeleton has no joints".into()));
        }
        let roots = self.joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 {
            return Err(GraspError::Schema(format!("skeleton needs exactly one root, found {roots}")));
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, j) in self.joints.iter().enumerate() {
            if !names.insert(j.name.as_str()) {
                return Err(GraspError::Schema(format!("duplicate joint name {:?}", j.name)));
            }
            if let Some(p) = j.parent {
                if p >= n || p == i {
                    return Err(GraspError::Schema(format!("joint {:?} has invalid parent {p}", j.name)));
                }
            }
            if let Some(b) = j.bone {
                if !(b.radius > 0.0) || !(b.length >= 0.0) {
                    return Err(GraspError::InvalidParam(format!("joint {:?}: capsule radius must be > 0 and length >= 0", j.name)));
                }
            }
            if !j.rest.is_valid() {
                return Err(GraspError::InvalidParam(format!("joint {:?}: rest pose is not a unit rotation", j.name)));
            }
        }
        for i in 0..n {
            let mut cur = i;
            for _ in 0..=n {
                match self.joints[cur].parent {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if self.joints[cur].parent.is_some() {
                return Err(GraspError::Schema(format!("joint {:?} is on a parent cycle", self.joints[i].name)));
            }
        }
        Ok(())
    }

    pub fn depth(&self, i: usize) -> usize {
        let mut d = 0;
        let mut cur = i;
        while let Some(p) = self.joints[cur].parent {
            d += 1;
            cur = p;
        }
        d
    }

    /// Joint indices ordered root to leaf (by depth, then index).
    pub fn root_to_leaf(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.joints.len()).collect();
        order.sort_by_key(|&i| (self.depth(i), i));
        order
    }

    /// World pose of every joint for the given local movement rotations.
    pub fn forward_kinematics(&self, root: &Pose, rotations: &[Quat]) -> Vec<Pose> {
        let mut world = vec![Pose::IDENTITY; self.joints.len()];
        for i in self.root_to_leaf() {
            let j = &self.joints[i];
            let local = Pose::new(j.rest.position, (j.rest.orientation * rotations[i]).normalized());
            let parent = j.parent.map_or(*root, |p| world[p]);
            world[i] = parent.compose(&local);
        }
        world
    }

    /// Bone capsules at the given world poses (`None` for joints without a bone).
    pub fn capsules(&self, world: &[Pose]) -> Vec<Option<Capsule>> {
        self.joints
            .iter()
            .zip(world)
            .map(|(j, w)| j.bone.map(|b| Capsule { a: w.position, b: w.transform_point(Vec3::new(b.length, 0.0, 0.0)), radius: b.radius }))
            .collect()
    }

    /// A palm with `fingers` chains of `phalanges` bones each, fingers
    /// spread along y and pointing along +x. Flexion about local y curls
    /// them toward −z.
    pub fn hand(fingers: usize, phalanges: usize) -> HandSkeleton {
        let mut joints =
            vec![Joint { name: "palm".into(), parent: None, rest: Pose::IDENTITY, bone: Some(BoneShape { radius: 0.012, length: 0.07 }), limits: None }];
        let spread = 0.022;
        for f in 0..fingers {
            let y = (f as f64 - (fingers as f64 - 1.0) / 2.0) * spread;
            let mut parent = 0;
            for k in 0..phalanges {
                let len = 0.035 * 0.8f64.powi(k as i32);
                let offset = if k == 0 { Vec3::new(0.08, y, 0.0) } else { Vec3::new(0.035 * 0.8f64.powi(k as i32 - 1), 0.0, 0.0) };
                joints.push(Joint {
                    name: format!("f{f}_p{k}"),
                    parent: Some(parent),
                    rest: Pose::from_position(offset),
                    bone: Some(BoneShape { radius: 0.008, length: len }),
                    limits: None,
                });
                parent = joints.len() - 1;
            }
        }
        HandSkeleton { joints }
    }
}

impl GraspMovement {
    /// Every phalanx flexes by `angle` radians; the palm stays put.
    pub fn curl(skel: &HandSkeleton, angle: f64) -> GraspMovement {
        let mut initial = BTreeMap::new();
        let mut final_pose = BTreeMap::new();
        for j in &skel.joints {
            initial.insert(j.name.clone(), Quat::IDENTITY);
            let q = if j.parent.is_some() { Quat::from_axis_angle(Vec3::Y, angle) } else { Quat::IDENTITY };
            final_pose.insert(j.name.clone(), q);
        }
        GraspMovement { initial, final_pose }
    }

    /// Same joint names as the skeleton in both poses.
    pub fn check(&self, skel: &HandSkeleton) -> Result<(), GraspError> {
        let names: std::collections::BTreeSet<&str> = skel.joints.iter().map(|j| j.name.as_str()).collect();
        for (label, pose) in [("initial", &self.initial), ("final", &self.final_pose)] {
            let keys: std::collections::BTreeSet<&str> = pose.keys().map(String::as_str).collect();
            if keys != names {
                let missing: Vec<&&str> = names.difference(&keys).collect();
                let extra: Vec<&&str> = keys.difference(&names).collect();
                return Err(GraspError::Schema(format!("{label} pose joint set differs from skeleton (missing {missing:?}, extra {extra:?})")));
            }
            if let Some((k, q)) = pose.iter().find(|(_, q)| !(q.norm() > 0.5 && q.norm().is_finite())) {
                return Err(GraspError::InvalidParam(format!("{label} rotation for {k:?} is not a rotation: {q:?}")));
            }
        }
        Ok(())
    }
}

/// Euler angles (radians) of `q` for `R = Rz(c)·Ry(b)·Rx(a)`.
pub fn to_euler(q: Quat) -> [f64; 3] {
    let m = q.to_rotation_matrix();
    let b = (-m[2][0]).clamp(-1.0, 1.0).asin();
    let a = m[2][1].atan2(m[2][2]);
    let c = m[1][0].atan2(m[0][0]);
    [a, b, c]
}

pub fn from_euler(e: [f64; 3]) -> Quat {
    Quat::from_axis_angle(Vec3::Z, e[2]) * Quat::from_axis_angle(Vec3::Y, e[1]) * Quat::from_axis_angle(Vec3::X, e[0])
}

impl JointLimits {
    pub fn clamp(&self, q: Quat) -> Quat {
        let e = to_euler(q);
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = e[k].clamp(self.min_deg[k].to_radians(), self.max_deg[k].to_radians());
        }
        if c == e {
            q
        } else {
            from_euler(c)
        }
    }
}
