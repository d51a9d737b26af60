//! Triangle meshes: validation, OBJ subset I/O, topology queries and a few
//! procedural generators used by tests and benchmarks.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use super::SoftBodyError;
use crate::geom::Vec3;

/// Triangles with area below this are dropped at load.
pub const DEGENERATE_AREA_M2: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

pub type EdgeKey = (u32, u32);

pub fn edge_key(a: u32, b: u32) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Validate indices and drop degenerate triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, SoftBodyError> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(SoftBodyError::InvalidMesh(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some(v) = vertices.iter().find(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite())) {
            return Err(SoftBodyError::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        let mut mesh = TriMesh { vertices, triangles: Vec::with_capacity(triangles.len()) };
        for t in triangles {
            if t[0] != t[1] && t[1] != t[2] && t[0] != t[2] && area(&mesh.vertices, t) >= DEGENERATE_AREA_M2 {
                mesh.triangles.push(t);
            }
        }
        Ok(mesh)
    }

    pub fn from_obj_str(s: &str) -> Result<Self, SoftBodyError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let parse_err = |msg: String| SoftBodyError::Parse { line: lineno + 1, msg };
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> =
                        it.take(3).map(|x| x.parse::<f64>().map_err(|e| parse_err(format!("bad coordinate '{x}': {e}")))).collect::<Result<_, _>>()?;
                    if c.len() != 3 {
                        return Err(parse_err("vertex needs 3 coordinates".into()));
                    }
                    vertices.push(Vec3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = it
                        .map(|tok| {
                            let first = tok.split('/').next().unwrap_or("");
                            let i: i64 = first.parse().map_err(|e| parse_err(format!("bad index '{tok}': {e}")))?;
                            let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                            if resolved < 0 {
                                return Err(parse_err(format!("index {i} out of range")));
                            }
                            Ok(resolved as u32)
                        })
                        .collect::<Result<_, _>>()?;
                    if idx.len() != 3 {
                        return Err(parse_err(format!("only triangles are supported, got {} vertices", idx.len())));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        if triangles.is_empty() {
            return Err(SoftBodyError::InvalidMesh("no faces".into()));
        }
        TriMesh::new(vertices, triangles)
    }

    pub fn load_obj(path: &Path) -> Result<Self, SoftBodyError> {
        TriMesh::from_obj_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn triangle_points(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Unit normal (zero for degenerate triangles).
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_points(t);
        let n = (b - a).cross(c - a);
        let l = n.norm();
        if l > 0.0 {
            n / l
        } else {
            Vec3::ZERO
        }
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::ZERO; self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            let fnormal = (b - a).cross(c - a);
            for &i in t {
                n[i as usize] += fnormal;
            }
        }
        n.into_iter().map(|v| if v.norm() > 0.0 { v.normalized() } else { v }).collect()
    }

    /// Axis-aligned bounding box diagonal (an upper bound on the diameter).
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for v in &self.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        (lo, hi)
    }

    /// Undirected edge → incident triangle indices.
    pub fn edge_triangles(&self) -> HashMap<EdgeKey, Vec<u32>> {
        let mut m: HashMap<EdgeKey, Vec<u32>> = HashMap::with_capacity(self.triangles.len() * 2);
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                m.entry(edge_key(t[k], t[(k + 1) % 3])).or_default().push(ti as u32);
            }
        }
        m
    }

    /// Vertex → incident triangle indices.
    pub fn vertex_triangles(&self) -> Vec<Vec<u32>> {
        let mut m = vec![Vec::new(); self.vertices.len()];
        for (ti, t) in self.triangles.iter().enumerate() {
            for &v in t {
                m[v as usize].push(ti as u32);
            }
        }
        m
    }

    pub fn max_edge_valence(&self) -> usize {
        self.edge_triangles().values().map(Vec::len).max().unwrap_or(0)
    }

    /// Every edge has at most two incident triangles.
    pub fn is_manifold_with_boundary(&self) -> bool {
        self.max_edge_valence() <= 2
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edge_triangles().values().filter(|t| t.len() == 1).count()
    }

    /// Connected components over triangle edge adjacency: (count, label per triangle).
    pub fn components(&self) -> (usize, Vec<u32>) {
        let edges = self.edge_triangles();
        let mut label = vec![u32::MAX; self.triangles.len()];
        let mut count = 0u32;
        for seed in 0..self.triangles.len() {
            if label[seed] != u32::MAX {
                continue;
            }
            label[seed] = count;
            let mut stack = vec![seed];
            while let Some(t) = stack.pop() {
                let tri = self.triangles[t];
                for k in 0..3 {
                    for &n in &edges[&edge_key(tri[k], tri[(k + 1) % 3])] {
                        if label[n as usize] == u32::MAX {
                            label[n as usize] = count;
                            stack.push(n as usize);
                        }
                    }
                }
            }
            count += 1;
        }
        (count as usize, label)
    }

    /// Closed UV ellipsoid with its polar axis along x.
    pub fn ellipsoid(segments: u32, rings: u32, radii: Vec3) -> TriMesh {
        assert!(segments >= 3 && rings >= 1);
        let mut v = vec![Vec3::new(radii.x, 0.0, 0.0)];
        for i in 1..=rings {
            let theta = PI * i as f64 / (rings + 1) as f64;
            for j in 0..segments {
                let phi = TAU * j as f64 / segments as f64;
                v.push(Vec3::new(radii.x * theta.cos(), radii.y * theta.sin() * phi.cos(), radii.z * theta.sin() * phi.sin()));
            }
        }
        v.push(Vec3::new(-radii.x, 0.0, 0.0));
        let south = v.len() as u32 - 1;
        let ring = |i: u32, j: u32| 1 + (i - 1) * segments + (j % segments);
        let mut t = Vec::new();
        for j in 0..segments {
            t.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..rings {
            for j in 0..segments {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                t.push([a, d, b]);
                t.push([a, c, d]);
            }
        }
        for j in 0..segments {
            t.push([south, ring(rings, j + 1), ring(rings, j)]);
        }
        TriMesh::new(v, t).expect("generated mesh is valid")
    }

    /// Liver-scale organ surface: 514 vertices, 1024 triangles, 0.28 m long.
    pub fn liver_scale() -> TriMesh {
        TriMesh::ellipsoid(64, 8, Vec3::new(0.14, 0.08, 0.06))
    }

    /// Heart-scale organ surface: 2498 vertices, 4992 triangles.
    pub fn heart_scale() -> TriMesh {
        TriMesh::ellipsoid(96, 26, Vec3::new(0.06, 0.05, 0.045))
    }

    /// Surface of the axis-aligned cube `[0, size]³`, `n` quads per face side.
    pub fn cube_surface(n: u32, size: f64) -> TriMesh {
        let mut index: BTreeMap<(u32, u32, u32), u32> = BTreeMap::new();
        let mut v = Vec::new();
        let mut t = Vec::new();
        let mut id = |p: (u32, u32, u32), v: &mut Vec<Vec3>| {
            *index.entry(p).or_insert_with(|| {
                let s = size / n as f64;
                v.push(Vec3::new(p.0 as f64 * s, p.1 as f64 * s, p.2 as f64 * s));
                v.len() as u32 - 1
            })
        };
        // (fixed axis, fixed value, u axis, v axis) with outward winding
        let faces: [(usize, u32, usize, usize); 6] = [(0, 0, 2, 1), (0, n, 1, 2), (1, 0, 0, 2), (1, n, 2, 0), (2, 0, 1, 0), (2, n, 0, 1)];
        for (axis, value, ua, va) in faces {
            for i in 0..n {
                for j in 0..n {
                    let corner = |du: u32, dv: u32| {
                        let mut c = [0u32; 3];
                        c[axis] = value;
                        c[ua] = i + du;
                        c[va] = j + dv;
                        (c[0], c[1], c[2])
                    };
                    let a = id(corner(0, 0), &mut v);
                    let b = id(corner(1, 0), &mut v);
                    let c = id(corner(1, 1), &mut v);
                    let d = id(corner(0, 1), &mut v);
                    t.push([a, b, c]);
                    t.push([a, c, d]);
                }
            }
        }
        TriMesh::new(v, t).expect("generated mesh is valid")
    }

    /// Open flat grid in the z=0 plane, `nx × ny` quads of side `spacing`.
    pub fn flat_grid(nx: u32, ny: u32, spacing: f64) -> TriMesh {
        let mut v = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                v.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        let id = |i: u32, j: u32| j * (nx + 1) + i;
        let mut t = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        TriMesh::new(v, t).expect("generated mesh is valid")
    }

    /// Geodesic sphere from a subdivided icosahedron.
    pub fn icosphere(subdivisions: u32, radius: f64) -> TriMesh {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vec3> = [
            (-1.0, p, 0.0),
            (1.0, p, 0.0),
            (-1.0, -p, 0.0),
            (1.0, -p, 0.0),
            (0.0, -1.0, p),
            (0.0, 1.0, p),
            (0.0, -1.0, -p),
            (0.0, 1.0, -p),
            (p, 0.0, -1.0),
            (p, 0.0, 1.0),
            (-p, 0.0, -1.0),
            (-p, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized() * radius)
        .collect();
        let mut t: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<EdgeKey, u32> = HashMap::new();
            let mut next = Vec::with_capacity(t.len() * 4);
            for tri in &t {
                let mut m = [0u32; 3];
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    m[k] = *mid.entry(edge_key(a, b)).or_insert_with(|| {
                        v.push(((v[a as usize] + v[b as usize]) * 0.5).normalized() * radius);
                        v.len() as u32 - 1
                    });
                }
                next.push([tri[0], m[0], m[2]]);
                next.push([tri[1], m[1], m[0]]);
                next.push([tri[2], m[2], m[1]]);
                next.push(m);
            }
            t = next;
        }
        TriMesh::new(v, t).expect("generated mesh is valid")
    }
}

fn area(v: &[Vec3], t: [u32; 3]) -> f64 {
    let [a, b, c] = t.map(|i| v[i as usize]);
    0.5 * (b - a).cross(c - a).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_round_trip_and_errors() {
        let m = TriMesh::flat_grid(2, 1, 0.5);
        let back = TriMesh::from_obj_str(&m.to_obj_string()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(TriMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"), Err(SoftBodyError::Parse { line: 5, .. })));
        assert!(TriMesh::from_obj_str("v 0 0 0\nf 1 2 3\n").is_err());
        let slashes = TriMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        assert_eq!(slashes.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn degenerate_triangles_are_dropped() {
        let v = vec![Vec3::ZERO, Vec3::X, Vec3::new(2.0, 0.0, 0.0), Vec3::Y];
        let m = TriMesh::new(v, vec![[0, 1, 2], [0, 1, 3], [0, 0, 3]]).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 3]]);
    }

    #[test]
    fn generators_have_expected_counts() {
        let liver = TriMesh::liver_scale();
        assert_eq!((liver.vertices.len(), liver.triangles.len()), (514, 1024));
        assert_eq!(liver.boundary_edge_count(), 0);
        assert!(liver.is_manifold_with_boundary());
        let heart = TriMesh::heart_scale();
        assert_eq!(heart.vertices.len(), 2498);
        let cube = TriMesh::cube_surface(3, 1.0);
        assert_eq!(cube.triangles.len(), 6 * 9 * 2);
        assert_eq!(cube.vertices.len(), 4 * 4 * 4 - 2 * 2 * 2);
        assert!((cube.total_area() - 6.0).abs() < 1e-12);
        assert_eq!(cube.boundary_edge_count(), 0);
        let sphere = TriMesh::icosphere(2, 1.0);
        assert_eq!(sphere.triangles.len(), 320);
        assert_eq!(sphere.components().0, 1);
    }

    #[test]
    fn outward_winding_on_closed_generators() {
        for m in [TriMesh::cube_surface(2, 1.0), TriMesh::liver_scale(), TriMesh::icosphere(1, 1.0)] {
            let (lo, hi) = m.bounds();
            let center = (lo + hi) * 0.5;
            for t in 0..m.triangles.len() {
                let [a, b, c] = m.triangle_points(t);
                let centroid = (a + b + c) / 3.0;
                assert!(m.triangle_normal(t).dot(centroid - center) > 0.0);
            }
        }
    }
}
