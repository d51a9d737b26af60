use crate::geom::Vec3;

/// Barycentric slack when testing hits on triangle borders.
const BARY_EPS: f64 = 1e-9;

/// Segment `p0→p1` against triangle `tri` (Möller–Trumbore). Returns
/// `(t along the segment, u, v)` with the hit at `a + u·(b−a) + v·(c−a)`.
pub(crate) fn segment_triangle(p0: Vec3, p1: Vec3, tri: [Vec3; 3]) -> Option<(f64, f64, f64)> {
    let [a, b, c] = tri;
    let d = p1 - p0;
    let e1 = b - a;
    let e2 = c - a;
    let h = d.cross(e2);
    let det = e1.dot(h);
    let scale = e1.norm() * e2.norm() * d.norm();
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return None;
    }
    let f = 1.0 / det;
    let s = p0 - a;
    let u = f * s.dot(h);
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = f * d.dot(q);
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = f * e2.dot(q);
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&t) {
        return None;
    }
    Some((t.clamp(0.0, 1.0), u, v))
}

/// A blade quad as its two triangles.
pub(crate) fn quad_triangles(q: &[Vec3; 4]) -> [[Vec3; 3]; 2] {
    [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
}

/// Parameter along `p0→p1` where it meets the quad, if it does.
pub(crate) fn segment_quad(p0: Vec3, p1: Vec3, q: &[Vec3; 4]) -> Option<f64> {
    quad_triangles(q).iter().filter_map(|t| segment_triangle(p0, p1, *t).map(|h| h.0)).reduce(f64::min)
}

pub(crate) fn segment_crosses_any(p0: Vec3, p1: Vec3, quads: &[[Vec3; 4]]) -> bool {
    quads.iter().any(|q| quad_triangles(q).iter().any(|t| segment_triangle(p0, p1, *t).is_some_and(|(s, _, _)| s > 1e-9 && s < 1.0 - 1e-9)))
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub(crate) fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Barycentric coordinates of `p` projected onto the plane of `abc`.
pub(crate) fn barycentric(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> [f64; 3] {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(v0);
    let d01 = v0.dot(v1);
    let d11 = v1.dot(v1);
    let d20 = v2.dot(v0);
    let d21 = v2.dot(v1);
    let denom = d00 * d11 - d01 * d01;
    if denom == 0.0 {
        return [1.0, 0.0, 0.0];
    }
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [1.0 - v - w, v, w]
}

/// Distance from `p` to segment `ab` and the parameter of the foot point.
pub(crate) fn point_segment(p: Vec3, a: Vec3, b: Vec3) -> (f64, f64) {
    let ab = b - a;
    let l2 = ab.norm_squared();
    let t = if l2 > 0.0 { ((p - a).dot(ab) / l2).clamp(0.0, 1.0) } else { 0.0 };
    ((a + ab * t).distance(p), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_hits_and_misses() {
        let tri = [Vec3::ZERO, Vec3::X, Vec3::Y];
        let hit = segment_triangle(Vec3::new(0.25, 0.25, -1.0), Vec3::new(0.25, 0.25, 1.0), tri).unwrap();
        assert!((hit.0 - 0.5).abs() < 1e-12 && (hit.1 - 0.25).abs() < 1e-12 && (hit.2 - 0.25).abs() < 1e-12);
        assert!(segment_triangle(Vec3::new(0.8, 0.8, -1.0), Vec3::new(0.8, 0.8, 1.0), tri).is_none());
        assert!(segment_triangle(Vec3::new(0.2, 0.2, 0.5), Vec3::new(0.2, 0.2, 1.0), tri).is_none());
        // coplanar segments are not reported
        assert!(segment_triangle(Vec3::new(-1.0, 0.2, 0.0), Vec3::new(1.0, 0.2, 0.0), tri).is_none());
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::ZERO, Vec3::X, Vec3::Y);
        assert_eq!(closest_point_on_triangle(Vec3::new(-1.0, -1.0, 0.0), a, b, c), a);
        assert!(closest_point_on_triangle(Vec3::new(0.2, 0.2, 3.0), a, b, c).distance(Vec3::new(0.2, 0.2, 0.0)) < 1e-12);
        let e = closest_point_on_triangle(Vec3::new(1.0, 1.0, 0.0), a, b, c);
        assert!(e.distance(Vec3::new(0.5, 0.5, 0.0)) < 1e-12);
    }
}
