//! Capsule-versus-mesh proximity.

use crate::cut::geometry::{closest_point_on_triangle, segment_triangle};
use crate::geom::Vec3;
use crate::softbody::TriMesh;

/// Default contact margin added to the capsule radius (meters).
pub const DEFAULT_CONTACT_OFFSET_M: f64 = 2e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactQuery {
    pub contact: bool,
    /// Distance from the capsule axis to the mesh.
    pub distance: f64,
    /// Closest point on the mesh.
    pub closest: Vec3,
}

/// Closest points between segments `p1q1` and `p2q2` (Ericson 5.1.9).
pub fn segment_segment(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> (Vec3, Vec3) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(d1);
    let e = d2.dot(d2);
    let f = d2.dot(r);
    let (s, t);
    if a <= 1e-30 && e <= 1e-30 {
        return (p1, p2);
    }
    if a <= 1e-30 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(r);
        if e <= 1e-30 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let s0 = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

/// Distance between segment `pq` and triangle `tri`, with the closest triangle point.
pub fn segment_triangle_distance(p: Vec3, q: Vec3, tri: [Vec3; 3]) -> (f64, Vec3) {
    if p != q {
        if let Some((_, u, v)) = segment_triangle(p, q, tri) {
            let x = tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[0]) * v;
            return (0.0, x);
        }
    }
    let mut best = (f64::MAX, tri[0]);
    for end in [p, q] {
        let c = closest_point_on_triangle(end, tri[0], tri[1], tri[2]);
        let d = c.distance(end);
        if d < best.0 {
            best = (d, c);
        }
    }
    for k in 0..3 {
        let (s, t) = segment_segment(p, q, tri[k], tri[(k + 1) % 3]);
        let d = s.distance(t);
        if d < best.0 {
            best = (d, t);
        }
    }
    best
}

/// True iff the capsule axis comes closer than `radius + offset` to the mesh.
pub fn capsule_mesh_contact(capsule: &Capsule, mesh: &TriMesh, offset: f64) -> ContactQuery {
    let reach = capsule.radius + offset;
    let lo = capsule.a.min_components(capsule.b) - Vec3::splat(reach);
    let hi = capsule.a.max_components(capsule.b) + Vec3::splat(reach);
    let mut best = ContactQuery { contact: false, distance: f64::INFINITY, closest: Vec3::ZERO };
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle_points(t);
        let tlo = tri[0].min_components(tri[1]).min_components(tri[2]);
        let thi = tri[0].max_components(tri[1]).max_components(tri[2]);
        // boxes that miss cannot be within reach; keep scanning for the true minimum otherwise
        if best.contact && (tlo.x > hi.x || tlo.y > hi.y || tlo.z > hi.z || thi.x < lo.x || thi.y < lo.y || thi.z < lo.z) {
            continue;
        }
        let (d, c) = segment_triangle_distance(capsule.a, capsule.b, tri);
        if d < best.distance {
            best.distance = d;
            best.closest = c;
            best.contact = d < reach;
        }
    }
    best
}

/// Cheap yes/no form used in the solver's inner loop.
pub(crate) fn touches(capsule: &Capsule, mesh: &TriMesh, offset: f64, bounds: (Vec3, Vec3)) -> bool {
    let reach = capsule.radius + offset;
    let lo = capsule.a.min_components(capsule.b) - Vec3::splat(reach);
    let hi = capsule.a.max_components(capsule.b) + Vec3::splat(reach);
    let (mlo, mhi) = bounds;
    if mlo.x > hi.x || mlo.y > hi.y || mlo.z > hi.z || mhi.x < lo.x || mhi.y < lo.y || mhi.z < lo.z {
        return false;
    }
    (0..mesh.triangles.len()).any(|t| {
        let tri = mesh.triangle_points(t);
        let tlo = tri[0].min_components(tri[1]).min_components(tri[2]);
        let thi = tri[0].max_components(tri[1]).max_components(tri[2]);
        if tlo.x > hi.x || tlo.y > hi.y || tlo.z > hi.z || thi.x < lo.x || thi.y < lo.y || thi.z < lo.z {
            return false;
        }
        segment_triangle_distance(capsule.a, capsule.b, tri).0 < reach
    })
}
