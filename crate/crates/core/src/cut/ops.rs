use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use super::edit::{apply, collect, quads_of, PointSet};
use super::geometry::{closest_point_on_triangle, segment_crosses_any};
use super::{BladePose, CutError, CutPath, CutStats};
use crate::geom::Vec3;
use crate::softbody::sampling::HashGrid;
use crate::softbody::{edge_key, SoftBody};

/// Off-surface tolerance for tear points; anything farther is projected (meters).
pub const TEAR_PROJECT_M: f64 = 1e-4;
/// Points farther than this from the surface are rejected (meters).
pub const TEAR_REJECT_M: f64 = 1e-2;

#[derive(Debug)]
pub struct CutOutcome {
    pub bodies: Vec<SoftBody>,
    pub stats: CutStats,
}

/// Where a topology change happened, for local rebinding.
#[derive(Clone, Debug, Default)]
pub struct AffectedRegion {
    /// Rest-space points; vertices within twice the bind radius are rebound.
    pub points: Vec<Vec3>,
    /// Vertices rebound regardless of distance.
    pub vertices: Vec<u32>,
    /// Blade quads no binding or particle link may cross.
    pub blades: Vec<[Vec3; 4]>,
}

impl AffectedRegion {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.vertices.is_empty()
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Component label per vertex and per particle (via its triangle).
fn labels(sb: &SoftBody) -> (Vec<u32>, Vec<u32>) {
    let (_, tri_label) = sb.mesh.components();
    let mut vl = vec![u32::MAX; sb.mesh.vertices.len()];
    for (t, tri) in sb.mesh.triangles.iter().enumerate() {
        for &v in tri {
            vl[v as usize] = tri_label[t];
        }
    }
    let pl = sb.particles.iter().map(|p| tri_label.get(p.triangle as usize).copied().unwrap_or(u32::MAX)).collect();
    (vl, pl)
}

/// Re-bind vertices near a topology change to particles on the same
/// component and the same side of every blade; drop particle links that
/// cross a separation.
pub fn rebind_particles(sb: &mut SoftBody, region: &AffectedRegion) {
    if region.is_empty() {
        return;
    }
    sb.update_all_vertices();
    let (vl, pl) = labels(sb);
    let reach = 2.0 * sb.params.bind_radius();
    let mut grid = HashGrid::new(reach);
    for (i, p) in region.points.iter().enumerate() {
        grid.insert(*p, i as u32);
    }
    let mut verts: BTreeSet<u32> = region.vertices.iter().copied().collect();
    for (v, x) in sb.rest.iter().enumerate() {
        if grid.near(*x).any(|i| region.points[i as usize].distance(*x) <= reach) {
            verts.insert(v as u32);
        }
    }
    let verts: Vec<u32> = verts.into_iter().collect();

    let positions: Vec<Vec3> = sb.particles.iter().map(|p| p.position).collect();
    let current = sb.mesh.vertices.clone();
    let blades = &region.blades;
    sb.rebind_vertices(&verts, |v, j| vl[v as usize] == pl[j as usize] && !segment_crosses_any(current[v as usize], positions[j as usize], blades));

    for i in 0..sb.particles.len() {
        let pi = positions[i];
        let keep: Vec<u32> =
            sb.particles[i].neighbors.iter().copied().filter(|&j| pl[i] == pl[j as usize] && !segment_crosses_any(pi, positions[j as usize], blades)).collect();
        sb.particles[i].neighbors = keep;
    }
}

/// One body per connected component, with vertices, particles and
/// bindings renumbered. Bindings to other components are dropped and the
/// remaining weights renormalized.
pub fn split_components(sb: SoftBody) -> Vec<SoftBody> {
    let (count, tri_label) = sb.mesh.components();
    if count <= 1 {
        return vec![sb];
    }
    let (vl, pl) = labels(&sb);
    let mut out = Vec::with_capacity(count);
    for c in 0..count as u32 {
        let mut vmap = vec![u32::MAX; sb.mesh.vertices.len()];
        let mut vertices = Vec::new();
        let mut rest = Vec::new();
        for v in 0..sb.mesh.vertices.len() {
            if vl[v] == c {
                vmap[v] = vertices.len() as u32;
                vertices.push(sb.mesh.vertices[v]);
                rest.push(sb.rest[v]);
            }
        }
        let mut tmap = vec![u32::MAX; sb.mesh.triangles.len()];
        let mut triangles = Vec::new();
        for (t, tri) in sb.mesh.triangles.iter().enumerate() {
            if tri_label[t] == c {
                tmap[t] = triangles.len() as u32;
                triangles.push(tri.map(|v| vmap[v as usize]));
            }
        }
        let mut pmap = vec![u32::MAX; sb.particles.len()];
        let mut particles = Vec::new();
        for (i, p) in sb.particles.iter().enumerate() {
            if pl[i] == c {
                pmap[i] = particles.len() as u32;
                particles.push(p.clone());
            }
        }
        for p in &mut particles {
            p.triangle = tmap[p.triangle as usize];
            p.neighbors = p.neighbors.iter().filter_map(|&j| (pmap[j as usize] != u32::MAX).then_some(pmap[j as usize])).collect();
            p.neighbors.sort_unstable();
        }
        let mut bindings = vec![Vec::new(); vertices.len()];
        for (v, b) in sb.raw_bindings().iter().enumerate() {
            if vmap[v] == u32::MAX {
                continue;
            }
            let kept: Vec<(u32, f64)> = b.iter().filter(|(p, _)| pmap[*p as usize] != u32::MAX).map(|&(p, w)| (pmap[p as usize], w)).collect();
            let sum: f64 = kept.iter().map(|x| x.1).sum();
            bindings[vmap[v] as usize] = if sum > 0.0 { kept.into_iter().map(|(p, w)| (p, w / sum)).collect() } else { Vec::new() };
        }
        let mesh = crate::softbody::TriMesh { vertices, triangles };
        let mut body = SoftBody::from_parts(sb.params, mesh, rest, particles, bindings);
        body.update_all_vertices();
        out.push(body);
    }
    out
}

/// Cut `sb` along `path`. Returns one body per resulting component; a
/// path that misses the mesh returns an unchanged copy and zero counts.
pub fn cut(sb: &SoftBody, path: &CutPath) -> Result<CutOutcome, CutError> {
    let start = Instant::now();
    let all: Vec<u32> = (0..sb.mesh.triangles.len() as u32).collect();
    let ps = collect(sb, path.poses(), &all);
    if ps.is_empty() {
        let total = ms(start);
        let stats = CutStats { components: 1, perform_ms: total, total_ms: total, ..CutStats::default() };
        return Ok(CutOutcome { bodies: vec![sb.clone()], stats });
    }
    let mut work = sb.clone();
    let applied = apply(&mut work, &ps)?;
    let perform_ms = ms(start);

    let t1 = Instant::now();
    let mut region = AffectedRegion { blades: quads_of(path.poses()), ..AffectedRegion::default() };
    region.points = applied.seam_vertices.iter().chain(&applied.new_vertices).map(|&v| work.rest[v as usize]).collect();
    region.vertices = applied.new_vertices.iter().copied().chain(applied.duplicates.iter().map(|d| d.0)).collect();
    rebind_particles(&mut work, &region);
    let bodies = split_components(work);
    let update_particles_ms = ms(t1);

    let stats = CutStats {
        intersection_points: ps.intersection_count(),
        triangles_split: applied.triangles_split,
        vertices_added: applied.new_vertices.len(),
        vertices_duplicated: applied.duplicates.len(),
        components: bodies.len(),
        perform_ms,
        update_particles_ms,
        total_ms: ms(start),
    };
    Ok(CutOutcome { bodies, stats })
}

#[derive(Clone, Debug)]
struct RimVertex {
    vertex: u32,
    base_rest: Vec3,
    arc: f64,
    dir: Vec3,
}

/// The advancing end of a progressive tear.
#[derive(Clone, Debug)]
pub struct TearFront {
    /// Surface points visited so far; the last one is the tip.
    pub polyline: Vec<Vec3>,
    pub tip: u32,
    /// Full rim separation at the tear start (meters); tapers to 0 at the tip.
    pub opening: f64,
    rims: Vec<RimVertex>,
    blades: Vec<[Vec3; 4]>,
}

/// Closest surface point over `candidates`: (point, triangle, distance).
fn project(sb: &SoftBody, p: Vec3, candidates: impl Iterator<Item = u32>) -> Option<(Vec3, u32, f64)> {
    candidates
        .map(|t| {
            let [a, b, c] = sb.mesh.triangle_points(t as usize);
            let q = closest_point_on_triangle(p, a, b, c);
            (q, t, q.distance(p))
        })
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)))
}

impl TearFront {
    /// Begin a tear at the surface point nearest `point`, inserting it as a
    /// vertex. `opening` defaults to 0.2 × the particle radius.
    pub fn start(sb: &mut SoftBody, point: Vec3, opening: Option<f64>) -> Result<TearFront, CutError> {
        let opening = opening.unwrap_or(0.2 * sb.params.radius);
        if !(opening >= 0.0 && opening.is_finite()) {
            return Err(CutError::InvalidTear(format!("opening must be >= 0, got {opening}")));
        }
        let (q, t, d) = project(sb, point, 0..sb.mesh.triangles.len() as u32).ok_or_else(|| CutError::InvalidTear("empty mesh".into()))?;
        if d > TEAR_REJECT_M {
            return Err(CutError::InvalidTear(format!("start point is {d:.4} m off the surface")));
        }
        let mut ps = PointSet::default();
        let tri = sb.mesh.triangles[t as usize];
        let i = ps.add_on_triangle(&sb.mesh.vertices, tri, t, q, &[]);
        let mut work = sb.clone();
        let applied = apply(&mut work, &ps)?;
        let tip = applied.gid[i];
        let region = AffectedRegion { points: vec![work.rest[tip as usize]], vertices: applied.new_vertices.clone(), blades: Vec::new() };
        rebind_particles(&mut work, &region);
        *sb = work;
        Ok(TearFront { polyline: vec![sb.mesh.vertices[tip as usize]], tip, opening, rims: Vec::new(), blades: Vec::new() })
    }

    pub fn length(&self) -> f64 {
        self.polyline.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn rim_vertices(&self) -> Vec<u32> {
        self.rims.iter().map(|r| r.vertex).collect()
    }

    /// Arc-length position of `p` along the polyline and the local tangent.
    fn locate(&self, p: Vec3) -> (f64, Vec3) {
        let mut best = (f64::MAX, 0.0, Vec3::X);
        let mut acc = 0.0;
        for w in self.polyline.windows(2) {
            let (d, s) = super::geometry::point_segment(p, w[0], w[1]);
            let len = w[0].distance(w[1]);
            if d < best.0 {
                best = (d, acc + s * len, (w[1] - w[0]).normalized());
            }
            acc += len;
        }
        (best.1, best.2)
    }
}

/// Extend the tear from its tip to the surface point nearest `next_point`.
/// All-or-nothing: on error `sb` and `front` are unchanged.
pub fn tear_segment(sb: &mut SoftBody, front: &mut TearFront, next_point: Vec3) -> Result<CutStats, CutError> {
    let start = Instant::now();
    let tip = front.tip;
    let tip_pos = sb.mesh.vertices[tip as usize];
    let vt = sb.mesh.vertex_triangles();
    let fan: BTreeSet<u32> = vt[tip as usize].iter().copied().collect();
    if fan.is_empty() {
        return Err(CutError::InvalidTear(format!("tip vertex {tip} has no triangles")));
    }
    let edge_tris = sb.mesh.edge_triangles();
    let mut cand = fan.clone();
    for &t in &fan {
        let tri = sb.mesh.triangles[t as usize];
        for k in 0..3 {
            cand.extend(edge_tris[&edge_key(tri[k], tri[(k + 1) % 3])].iter().copied());
        }
    }
    let cand: Vec<u32> = cand.into_iter().collect();
    let (p, pt, d) = project(sb, next_point, cand.iter().copied()).expect("non-empty candidates");
    if d > TEAR_REJECT_M {
        return Err(CutError::InvalidTear(format!("next point is {d:.4} m from the surface near the tip")));
    }
    let step = p - tip_pos;
    if step.norm() <= super::SNAP_M {
        return Err(CutError::InvalidTear("next point coincides with the tip".into()));
    }

    // blade: the step extruded along the surface normal
    let normals = sb.mesh.vertex_normals();
    let tangent = step.normalized();
    let mut n = normals[tip as usize] + sb.mesh.triangle_normal(pt as usize);
    n = n - tangent * n.dot(tangent);
    let n = if n.norm() > 1e-12 { n.normalized() } else { tangent.any_perpendicular().normalized() };
    let fan_edge = fan
        .iter()
        .flat_map(|&t| {
            let [a, b, c] = sb.mesh.triangle_points(t as usize);
            [a.distance(b), b.distance(c), c.distance(a)]
        })
        .fold(0.0, f64::max);
    let h = 0.5 * step.norm().max(fan_edge);
    let poses = [BladePose { top: tip_pos + n * h, bottom: tip_pos - n * h }, BladePose { top: p + n * h, bottom: p - n * h }];
    let ps = collect(sb, &poses, &cand);
    let mut work = sb.clone();
    let applied = apply(&mut work, &ps)?;
    let new_tip = (0..ps.feats.len())
        .min_by(|&a, &b| ps.pos[a].distance(p).total_cmp(&ps.pos[b].distance(p)))
        .map(|i| applied.gid[i])
        .filter(|&v| v != tip && work.mesh.vertices[v as usize].distance(p) <= 1e-3 * (1.0 + h))
        .ok_or_else(|| CutError::InvalidTear("step did not reach the next point".into()))?;

    let mut next = front.clone();
    next.polyline.push(work.mesh.vertices[new_tip as usize]);
    next.tip = new_tip;
    let quads = quads_of(&poses);
    next.blades.extend(quads.iter().copied());

    // new rim vertices: both copies of every duplicated seam vertex
    let normals = work.mesh.vertex_normals();
    let wvt = work.mesh.vertex_triangles();
    let mut seen: BTreeSet<u32> = next.rims.iter().map(|r| r.vertex).collect();
    let mut fresh: BTreeMap<u32, ()> = BTreeMap::new();
    for &(a, b) in &applied.duplicates {
        fresh.insert(a, ());
        fresh.insert(b, ());
    }
    for &v in fresh.keys() {
        if !seen.insert(v) {
            continue;
        }
        let base = work.rest[v as usize];
        let (arc, tan) = next.locate(work.mesh.vertices[v as usize]);
        let side = normals[v as usize].cross(tan);
        let centroid = wvt[v as usize]
            .iter()
            .map(|&t| work.mesh.triangles[t as usize].iter().map(|&x| work.rest[x as usize]).fold(Vec3::ZERO, |s, x| s + x) / 3.0)
            .fold(Vec3::ZERO, |s, x| s + x)
            / wvt[v as usize].len().max(1) as f64;
        let sign = if (centroid - base).dot(side) < 0.0 { -1.0 } else { 1.0 };
        let dir = if side.norm() > 1e-12 { side.normalized() * sign } else { Vec3::ZERO };
        next.rims.push(RimVertex { vertex: v, base_rest: base, arc, dir });
    }
    let total = next.length();
    for r in &next.rims {
        let taper = if total > 0.0 { ((total - r.arc) / total).clamp(0.0, 1.0) } else { 0.0 };
        work.rest[r.vertex as usize] = r.base_rest + r.dir * (0.5 * next.opening * taper);
    }
    let perform_ms = ms(start);

    let t1 = Instant::now();
    let mut region = AffectedRegion { blades: next.blades.clone(), ..AffectedRegion::default() };
    region.points = applied.seam_vertices.iter().chain(&applied.new_vertices).map(|&v| work.rest[v as usize]).collect();
    region.vertices = next.rims.iter().map(|r| r.vertex).chain(applied.new_vertices.iter().copied()).collect();
    rebind_particles(&mut work, &region);
    let update_particles_ms = ms(t1);

    *sb = work;
    *front = next;
    Ok(CutStats {
        intersection_points: ps.intersection_count(),
        triangles_split: applied.triangles_split,
        vertices_added: applied.new_vertices.len(),
        vertices_duplicated: applied.duplicates.len(),
        components: sb.mesh.components().0,
        perform_ms,
        update_particles_ms,
        total_ms: ms(start),
    })
}
