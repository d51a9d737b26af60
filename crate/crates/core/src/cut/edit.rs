//! Topology edit shared by cuts and tears: blade/mesh intersection points,
//! per-triangle chords, local re-triangulation and rim duplication.

use std::collections::{BTreeMap, BTreeSet};

use super::geometry::{barycentric, point_segment, segment_quad, segment_triangle};
use super::retri::{retriangulate, LocalInput};
use super::{BladePose, CutError};
use crate::geom::Vec3;
use crate::softbody::mesh::EdgeKey;
use crate::softbody::{edge_key, SoftBody};

/// Intersections closer than this to a vertex snap to it (meters).
pub const SNAP_M: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub(crate) enum Feature {
    Vertex(u32),
    /// Point on edge `key` at parameter `s` from `key.0` toward `key.1`.
    Edge {
        key: EdgeKey,
        s: f64,
    },
    Face {
        tri: u32,
        bary: [f64; 3],
    },
}

#[derive(Default)]
pub(crate) struct PointSet {
    pub feats: Vec<Feature>,
    pub pos: Vec<Vec3>,
    pub quads: Vec<BTreeSet<usize>>,
    /// Produced by a mesh edge crossing a quad (these are the counted points).
    pub from_edge: Vec<bool>,
    edge_pts: BTreeMap<EdgeKey, Vec<usize>>,
    face_pts: BTreeMap<u32, Vec<usize>>,
    vertex_pts: BTreeMap<u32, usize>,
    /// Triangle → chords as point-index pairs.
    pub chords: BTreeMap<u32, Vec<(usize, usize)>>,
}

impl PointSet {
    pub fn is_empty(&self) -> bool {
        self.feats.is_empty()
    }

    pub fn intersection_count(&self) -> usize {
        self.from_edge.iter().filter(|&&b| b).count()
    }

    fn push(&mut self, f: Feature, p: Vec3, quads: &[usize], from_edge: bool) -> usize {
        self.feats.push(f);
        self.pos.push(p);
        self.quads.push(quads.iter().copied().collect());
        self.from_edge.push(from_edge);
        self.feats.len() - 1
    }

    fn touch(&mut self, i: usize, quads: &[usize], from_edge: bool) -> usize {
        self.quads[i].extend(quads.iter().copied());
        self.from_edge[i] |= from_edge;
        i
    }

    fn add_vertex(&mut self, v: u32, p: Vec3, quads: &[usize], from_edge: bool) -> usize {
        if let Some(&i) = self.vertex_pts.get(&v) {
            return self.touch(i, quads, from_edge);
        }
        let i = self.push(Feature::Vertex(v), p, quads, from_edge);
        self.vertex_pts.insert(v, i);
        i
    }

    fn add_edge(&mut self, key: EdgeKey, s: f64, p: Vec3, quads: &[usize], from_edge: bool) -> usize {
        if let Some(&i) = self.edge_pts.get(&key).and_then(|l| l.iter().find(|&&i| self.pos[i].distance(p) <= SNAP_M)) {
            return self.touch(i, quads, from_edge);
        }
        let i = self.push(Feature::Edge { key, s }, p, quads, from_edge);
        self.edge_pts.entry(key).or_default().push(i);
        i
    }

    fn add_face(&mut self, tri: u32, bary: [f64; 3], p: Vec3, quads: &[usize]) -> usize {
        if let Some(&i) = self.face_pts.get(&tri).and_then(|l| l.iter().find(|&&i| self.pos[i].distance(p) <= SNAP_M)) {
            return self.touch(i, quads, false);
        }
        let i = self.push(Feature::Face { tri, bary }, p, quads, false);
        self.face_pts.entry(tri).or_default().push(i);
        i
    }

    /// Add a point known to lie on triangle `t`, snapping to a corner or side.
    pub fn add_on_triangle(&mut self, verts: &[Vec3], tri: [u32; 3], t: u32, p: Vec3, quads: &[usize]) -> usize {
        let c = tri.map(|v| verts[v as usize]);
        if let Some(k) = (0..3).filter(|&k| c[k].distance(p) <= SNAP_M).min_by(|&a, &b| c[a].distance(p).total_cmp(&c[b].distance(p))) {
            return self.add_vertex(tri[k], c[k], quads, false);
        }
        let side = (0..3).map(|k| (k, point_segment(p, c[k], c[(k + 1) % 3]))).min_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).expect("three sides");
        let (k, (d, along)) = side;
        if d <= SNAP_M {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = edge_key(a, b);
            let s = if a == key.0 { along } else { 1.0 - along };
            return self.add_edge(key, s, verts[key.0 as usize].lerp(verts[key.1 as usize], s), quads, false);
        }
        self.add_face(t, barycentric(p, c[0], c[1], c[2]), p, quads)
    }

    /// Points of quad `k` lying on triangle `t`.
    fn on_triangle(&self, tri: [u32; 3], t: u32, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &v in &tri {
            out.extend(self.vertex_pts.get(&v).copied());
        }
        for j in 0..3 {
            if let Some(l) = self.edge_pts.get(&edge_key(tri[j], tri[(j + 1) % 3])) {
                out.extend(l.iter().copied());
            }
        }
        if let Some(l) = self.face_pts.get(&t) {
            out.extend(l.iter().copied());
        }
        out.retain(|&i| self.quads[i].contains(&k));
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub(crate) fn quads_of(poses: &[BladePose]) -> Vec<[Vec3; 4]> {
    poses.windows(2).map(|w| [w[0].top, w[0].bottom, w[1].bottom, w[1].top]).collect()
}

/// Intersect the blade sweep with `candidates` (current positions) and
/// derive one chord chain per (triangle, quad).
pub(crate) fn collect(sb: &SoftBody, poses: &[BladePose], candidates: &[u32]) -> PointSet {
    let verts = &sb.mesh.vertices;
    let tris = &sb.mesh.triangles;
    let quads = quads_of(poses);
    let mut ps = PointSet::default();
    let (qlo, qhi) = quads.iter().flatten().fold((Vec3::splat(f64::MAX), Vec3::splat(f64::MIN)), |(lo, hi), &p| (lo.min_components(p), hi.max_components(p)));
    let pad = Vec3::splat(SNAP_M);
    let overlaps = |t: u32| {
        let c = tris[t as usize].map(|v| verts[v as usize]);
        let lo = c[0].min_components(c[1]).min_components(c[2]);
        let hi = c[0].max_components(c[1]).max_components(c[2]);
        lo.x <= qhi.x + pad.x && lo.y <= qhi.y + pad.y && lo.z <= qhi.z + pad.z && hi.x >= qlo.x - pad.x && hi.y >= qlo.y - pad.y && hi.z >= qlo.z - pad.z
    };
    let cand: Vec<u32> = candidates.iter().copied().filter(|&t| overlaps(t)).collect();

    // mesh edges against quads
    let edges: BTreeSet<EdgeKey> = cand
        .iter()
        .flat_map(|&t| {
            let tri = tris[t as usize];
            (0..3).map(move |k| edge_key(tri[k], tri[(k + 1) % 3]))
        })
        .collect();
    for &key in &edges {
        let (pa, pb) = (verts[key.0 as usize], verts[key.1 as usize]);
        let len = pa.distance(pb);
        for (k, q) in quads.iter().enumerate() {
            let Some(s) = segment_quad(pa, pb, q) else { continue };
            if s * len <= SNAP_M {
                ps.add_vertex(key.0, pa, &[k], true);
            } else if (1.0 - s) * len <= SNAP_M {
                ps.add_vertex(key.1, pb, &[k], true);
            } else {
                ps.add_edge(key, s, pa.lerp(pb, s), &[k], true);
            }
        }
    }

    // blade edges (ribs shared by consecutive quads, plus top and bottom rails) against triangles
    let n = quads.len();
    let mut blade_edges: Vec<(Vec3, Vec3, Vec<usize>)> = Vec::new();
    for (i, pose) in poses.iter().enumerate().take(n + 1) {
        let touching: Vec<usize> = [i.checked_sub(1), (i < n).then_some(i)].into_iter().flatten().collect();
        blade_edges.push((pose.top, pose.bottom, touching));
    }
    for i in 0..n {
        blade_edges.push((poses[i].top, poses[i + 1].top, vec![i]));
        blade_edges.push((poses[i].bottom, poses[i + 1].bottom, vec![i]));
    }
    for &t in &cand {
        let tri = tris[t as usize];
        let c = tri.map(|v| verts[v as usize]);
        for (p0, p1, touching) in &blade_edges {
            if let Some((_, u, v)) = segment_triangle(*p0, *p1, c) {
                let p = c[0] + (c[1] - c[0]) * u + (c[2] - c[0]) * v;
                ps.add_on_triangle(verts, tri, t, p, touching);
            }
        }
    }

    // chords: all points of one quad on one triangle lie on a segment; chain them in order
    for &t in &cand {
        let tri = tris[t as usize];
        for k in 0..n {
            let pts = ps.on_triangle(tri, t, k);
            if pts.len() < 2 {
                continue;
            }
            let mut far = (pts[0], pts[1], -1.0);
            for (a, &i) in pts.iter().enumerate() {
                for &j in &pts[a + 1..] {
                    let d = ps.pos[i].distance(ps.pos[j]);
                    if d > far.2 {
                        far = (i, j, d);
                    }
                }
            }
            let (o, dir) = (ps.pos[far.0], ps.pos[far.1] - ps.pos[far.0]);
            let mut chain = pts.clone();
            chain.sort_by(|&a, &b| (ps.pos[a] - o).dot(dir).total_cmp(&(ps.pos[b] - o).dot(dir)));
            let entry = ps.chords.entry(t).or_default();
            for w in chain.windows(2) {
                let c = (w[0].min(w[1]), w[0].max(w[1]));
                if !entry.contains(&c) {
                    entry.push(c);
                }
            }
        }
    }
    ps
}

pub(crate) struct Applied {
    /// Global vertex id of every point in the set.
    pub gid: Vec<u32>,
    pub new_vertices: Vec<u32>,
    pub seam_vertices: BTreeSet<u32>,
    /// `(duplicate, original)` pairs created by rim separation.
    pub duplicates: Vec<(u32, u32)>,
    pub triangles_split: usize,
}

/// Apply the point set to `sb`: split triangles, then duplicate seam
/// vertices into rims. All-or-nothing: on error `sb` is untouched.
pub(crate) fn apply(sb: &mut SoftBody, ps: &PointSet) -> Result<Applied, CutError> {
    let mut cur = sb.mesh.vertices.clone();
    let mut rest = sb.rest.clone();
    let mut tris = sb.mesh.triangles.clone();
    let edge_tris = sb.mesh.edge_triangles();

    // deterministic ids: edge points by (edge, parameter), then face points by (triangle, creation)
    let mut order: Vec<usize> = (0..ps.feats.len()).filter(|&i| !matches!(ps.feats[i], Feature::Vertex(_))).collect();
    order.sort_by(|&a, &b| match (ps.feats[a], ps.feats[b]) {
        (Feature::Edge { key: ka, s: sa }, Feature::Edge { key: kb, s: sb }) => ka.cmp(&kb).then(sa.total_cmp(&sb)),
        (Feature::Edge { .. }, _) => std::cmp::Ordering::Less,
        (_, Feature::Edge { .. }) => std::cmp::Ordering::Greater,
        (Feature::Face { tri: ta, .. }, Feature::Face { tri: tb, .. }) => ta.cmp(&tb).then(a.cmp(&b)),
        _ => a.cmp(&b),
    });
    let mut gid = vec![u32::MAX; ps.feats.len()];
    let mut new_vertices = Vec::new();
    for (i, f) in ps.feats.iter().enumerate() {
        if let Feature::Vertex(v) = f {
            gid[i] = *v;
        }
    }
    for &i in &order {
        let id = cur.len() as u32;
        gid[i] = id;
        new_vertices.push(id);
        match ps.feats[i] {
            Feature::Edge { key, s } => {
                cur.push(cur[key.0 as usize].lerp(cur[key.1 as usize], s));
                rest.push(rest[key.0 as usize].lerp(rest[key.1 as usize], s));
            }
            Feature::Face { tri, bary } => {
                let t = tris[tri as usize];
                let mix = |xs: &[Vec3]| xs[t[0] as usize] * bary[0] + xs[t[1] as usize] * bary[1] + xs[t[2] as usize] * bary[2];
                let (c, r) = (mix(&cur), mix(&rest));
                cur.push(c);
                rest.push(r);
            }
            Feature::Vertex(_) => unreachable!(),
        }
    }

    let mut affected: BTreeSet<u32> = ps.chords.keys().copied().collect();
    for (i, f) in ps.feats.iter().enumerate() {
        match *f {
            Feature::Edge { key, .. } => {
                let ts = edge_tris.get(&key).map(Vec::as_slice).unwrap_or(&[]);
                if ts.len() > 2 {
                    return Err(CutError::UnsupportedTopology(format!("edge {key:?} has {} incident triangles", ts.len())));
                }
                affected.extend(ts.iter().copied());
            }
            Feature::Face { tri, .. } => {
                affected.insert(tri);
            }
            Feature::Vertex(_) => {}
        }
        let _ = i;
    }
    for &t in &affected {
        let tri = sb.mesh.triangles[t as usize];
        for k in 0..3 {
            if edge_tris[&edge_key(tri[k], tri[(k + 1) % 3])].len() > 2 {
                return Err(CutError::UnsupportedTopology(format!("non-manifold edge at triangle {t}")));
            }
        }
    }

    let mut seams: BTreeSet<EdgeKey> = BTreeSet::new();
    let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut triangles_split = 0;
    for &t in &affected {
        let tri = sb.mesh.triangles[t as usize];
        let mut sides: [Vec<(f64, u32)>; 3] = Default::default();
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = edge_key(a, b);
            if let Some(l) = ps.edge_pts.get(&key) {
                for &i in l {
                    if let Feature::Edge { s, .. } = ps.feats[i] {
                        sides[k].push((if a == key.0 { s } else { 1.0 - s }, gid[i]));
                    }
                }
            }
        }
        let interior: Vec<((f64, f64), u32)> = ps
            .face_pts
            .get(&t)
            .map(|l| {
                l.iter()
                    .filter_map(|&i| match ps.feats[i] {
                        Feature::Face { bary, .. } => Some(((bary[1], bary[2]), gid[i])),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let chords: Vec<(u32, u32)> = ps.chords.get(&t).map(|c| c.iter().map(|&(a, b)| (gid[a], gid[b])).collect()).unwrap_or_default();
        let input = LocalInput { corners: tri, sides, interior, chords };
        let out = retriangulate(&input).map_err(|e| CutError::UnsupportedTopology(format!("triangle {t}: {e}")))?;
        seams.extend(out.seams.iter().map(|&(a, b)| edge_key(a, b)));
        let mut ids = vec![t];
        tris[t as usize] = out.triangles[0];
        for &nt in &out.triangles[1..] {
            ids.push(tris.len() as u32);
            tris.push(nt);
        }
        if ids.len() > 1 {
            triangles_split += 1;
        }
        children.insert(t, ids);
    }

    // rim separation: split each seam vertex's fan into wedges bounded by seam edges
    let seam_vertices: BTreeSet<u32> = seams.iter().flat_map(|&(a, b)| [a, b]).collect();
    let mut vt: Vec<Vec<u32>> = vec![Vec::new(); cur.len()];
    for (ti, t) in tris.iter().enumerate() {
        for &v in t {
            vt[v as usize].push(ti as u32);
        }
    }
    let mut bindings = sb.raw_bindings().to_vec();
    bindings.resize(cur.len(), Vec::new());
    let mut duplicates = Vec::new();
    for &v in &seam_vertices {
        let fan = vt[v as usize].clone();
        let mut parent: Vec<usize> = (0..fan.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut by_other: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (fi, &t) in fan.iter().enumerate() {
            for &w in &tris[t as usize] {
                if w != v {
                    by_other.entry(w).or_default().push(fi);
                }
            }
        }
        for (w, fs) in by_other {
            if seams.contains(&edge_key(v, w)) {
                continue;
            }
            for pair in fs.windows(2) {
                let (a, b) = (find(&mut parent, pair[0]), find(&mut parent, pair[1]));
                parent[a] = b;
            }
        }
        let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (fi, &t) in fan.iter().enumerate() {
            let r = find(&mut parent, fi);
            groups.entry(r).or_default().push(t);
        }
        let mut groups: Vec<Vec<u32>> = groups.into_values().collect();
        groups.sort_by_key(|g| *g.iter().min().expect("non-empty"));
        for g in groups.iter().skip(1) {
            let nv = cur.len() as u32;
            cur.push(cur[v as usize]);
            rest.push(rest[v as usize]);
            bindings.push(bindings[v as usize].clone());
            vt.push(g.clone());
            for &t in g {
                for x in tris[t as usize].iter_mut() {
                    if *x == v {
                        *x = nv;
                    }
                }
            }
            vt[v as usize].retain(|t| !g.contains(t));
            duplicates.push((nv, v));
        }
    }

    // commit
    for p in &mut sb.particles {
        let Some(ch) = children.get(&p.triangle) else { continue };
        if ch.len() == 1 {
            continue;
        }
        let best = ch
            .iter()
            .map(|&c| {
                let t = tris[c as usize].map(|v| rest[v as usize]);
                let b = barycentric(p.anchor, t[0], t[1], t[2]);
                (c, b[0].min(b[1]).min(b[2]))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("children");
        p.triangle = best.0;
    }
    sb.mesh.vertices = cur;
    sb.mesh.triangles = tris;
    sb.rest = rest;
    *sb.raw_bindings_mut() = bindings;
    sb.refresh_reverse_index();
    Ok(Applied { gid, new_vertices, seam_vertices, duplicates, triangles_split })
}
