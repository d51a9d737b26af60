use serde::{Deserialize, Serialize};

use super::contact::touches;
use super::{GraspError, GraspMovement, HandSkeleton, DEFAULT_CONTACT_OFFSET_M};
use crate::geom::{Pose, Quat, Vec3};
use crate::softbody::TriMesh;

/// The closing parameter advances in steps of `1/STEPS`.
pub const STEPS: u32 = 60;
pub const BISECTION_ITERATIONS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspOptions {
    pub contact_offset: f64,
}

impl Default for GraspOptions {
    fn default() -> Self {
        GraspOptions { contact_offset: DEFAULT_CONTACT_OFFSET_M }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspResult {
    /// Final local rotation per joint (movement space, before `rest`).
    pub rotations: Vec<Quat>,
    /// Closing parameter each joint stopped at (1 if never frozen).
    pub s: Vec<f64>,
    /// The joint's own bone touched the object.
    pub contact: Vec<bool>,
}

impl GraspResult {
    pub fn frozen(&self, i: usize) -> bool {
        self.s[i] < 1.0
    }
}

struct Solver<'a> {
    skel: &'a HandSkeleton,
    object: &'a TriMesh,
    bounds: (Vec3, Vec3),
    root: Pose,
    offset: f64,
    initial: Vec<Quat>,
    target: Vec<Quat>,
    frozen: Vec<Option<f64>>,
    contact: Vec<bool>,
    order: Vec<usize>,
}

impl Solver<'_> {
    fn rotation(&self, i: usize, s: f64) -> Quat {
        let q = self.initial[i].slerp(self.target[i], s);
        match self.skel.joints[i].limits {
            Some(l) => l.clamp(q),
            None => q,
        }
    }

    fn rotations_at(&self, s: f64) -> Vec<Quat> {
        (0..self.initial.len()).map(|i| self.rotation(i, self.frozen[i].unwrap_or(s))).collect()
    }

    fn bone_touches(&self, i: usize, s: f64) -> bool {
        let world = self.skel.forward_kinematics(&self.root, &self.rotations_at(s));
        let Some(b) = self.skel.joints[i].bone else { return false };
        let w = world[i];
        let cap = super::Capsule { a: w.position, b: w.transform_point(Vec3::new(b.length, 0.0, 0.0)), radius: b.radius };
        touches(&cap, self.object, self.offset, self.bounds)
    }

    /// Unfrozen bones (root to leaf) in contact at `s`.
    fn contacts(&self, s: f64) -> Vec<usize> {
        let world = self.skel.forward_kinematics(&self.root, &self.rotations_at(s));
        let caps = self.skel.capsules(&world);
        self.order
            .iter()
            .copied()
            .filter(|&i| self.frozen[i].is_none() && caps[i].is_some_and(|c| touches(&c, self.object, self.offset, self.bounds)))
            .collect()
    }

    /// Smallest `s` in `(lo, hi]` where bone `i` touches, to bisection precision.
    fn refine(&self, i: usize, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..BISECTION_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if self.bone_touches(i, mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Freeze `i` and its ancestors: moving an ancestor would drag the
    /// touching bone into the object.
    fn freeze(&mut self, i: usize, s: f64) {
        self.contact[i] = true;
        let mut cur = Some(i);
        while let Some(j) = cur {
            if self.frozen[j].is_none() {
                self.frozen[j] = Some(s);
            }
            cur = self.skel.joints[j].parent;
        }
    }

    fn all_frozen(&self) -> bool {
        (0..self.frozen.len()).all(|i| self.frozen[i].is_some() || self.skel.joints[i].bone.is_none())
    }
}

/// Close the hand from `movement.initial` to `movement.final_pose` around `object`.
pub fn solve_grasp(skel: &HandSkeleton, movement: &GraspMovement, object: &TriMesh, root: &Pose, opts: &GraspOptions) -> Result<GraspResult, GraspError> {
    skel.validate()?;
    movement.check(skel)?;
    if object.triangles.is_empty() {
        return Err(GraspError::InvalidParam("object mesh has no triangles".into()));
    }
    if !(opts.contact_offset >= 0.0) {
        return Err(GraspError::InvalidParam(format!("contact offset must be >= 0, got {}", opts.contact_offset)));
    }
    let initial: Vec<Quat> = skel.joints.iter().map(|j| movement.initial[&j.name].normalized()).collect();
    let target: Vec<Quat> = skel.joints.iter().map(|j| movement.final_pose[&j.name].normalized()).collect();
    let n = skel.joints.len();
    let mut sv = Solver {
        skel,
        object,
        bounds: object.bounds(),
        root: *root,
        offset: opts.contact_offset,
        initial,
        target,
        frozen: vec![None; n],
        contact: vec![false; n],
        order: skel.root_to_leaf(),
    };

    // bones already touching at the start stay at the initial pose
    while let Some(&i) = sv.contacts(0.0).first() {
        sv.freeze(i, 0.0);
    }
    let mut prev = 0.0;
    for k in 1..=STEPS {
        if sv.all_frozen() {
            break;
        }
        let s = k as f64 / STEPS as f64;
        // several bones may touch within one step: freeze the earliest
        // first, then re-test the rest against the updated pose
        loop {
            let hits = sv.contacts(s);
            let Some((i, at)) = hits.iter().map(|&i| (i, sv.refine(i, prev, s))).min_by(|a, b| a.1.total_cmp(&b.1)) else { break };
            sv.freeze(i, at);
        }
        prev = s;
    }
    let s: Vec<f64> = sv.frozen.iter().map(|f| f.unwrap_or(1.0)).collect();
    let rotations = (0..n).map(|i| sv.rotation(i, s[i])).collect();
    Ok(GraspResult { rotations, s, contact: sv.contact })
}
