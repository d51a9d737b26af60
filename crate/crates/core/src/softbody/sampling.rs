//! Poisson-disk dart throwing on a triangle-mesh surface.

use std::collections::HashMap;

use rand::Rng;

use super::mesh::TriMesh;
use super::SoftBodyError;
use crate::geom::Vec3;
use crate::rng::stream;

/// Sampling stops after this many consecutive rejected darts.
pub const MAX_CONSECUTIVE_REJECTIONS: u32 = 300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub triangle: u32,
}

/// Uniform hash grid over points for radius queries.
pub(crate) struct HashGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl HashGrid {
    pub(crate) fn new(cell: f64) -> Self {
        HashGrid { cell: cell.max(1e-9), cells: HashMap::new() }
    }

    fn key(&self, p: Vec3) -> (i64, i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64)
    }

    pub(crate) fn insert(&mut self, p: Vec3, id: u32) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    /// Ids in the 27 cells around `p`; callers filter by exact distance.
    /// Complete for query radii up to the cell size.
    pub(crate) fn near(&self, p: Vec3) -> impl Iterator<Item = u32> + '_ {
        let (x, y, z) = self.key(p);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).flat_map(move |dy| (-1..=1).map(move |dz| (x + dx, y + dy, z + dz))))
            .filter_map(|k| self.cells.get(&k))
            .flatten()
            .copied()
    }
}

/// Surface samples with pairwise distance ≥ `r`. Deterministic under `seed`.
pub fn poisson_sample(mesh: &TriMesh, r: f64, seed: u64) -> Result<Vec<SurfacePoint>, SoftBodyError> {
    if !(r > 0.0) {
        return Err(SoftBodyError::InvalidParam(format!("sampling radius must be > 0, got {r}")));
    }
    if mesh.triangles.is_empty() {
        return Err(SoftBodyError::InvalidMesh("mesh has no triangles".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        acc += mesh.triangle_area(t);
        cdf.push(acc);
    }
    let mut rng = stream(seed, "poisson", 0);
    let mut grid = HashGrid::new(r);
    let mut out: Vec<SurfacePoint> = Vec::new();
    let mut rejections = 0;
    while rejections < MAX_CONSECUTIVE_REJECTIONS {
        let pick = rng.gen::<f64>() * acc;
        let t = cdf.partition_point(|&c| c <= pick).min(cdf.len() - 1);
        let (u, v): (f64, f64) = (rng.gen(), rng.gen());
        let su = u.sqrt();
        let [a, b, c] = mesh.triangle_points(t);
        let p = a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v);
        if grid.near(p).any(|j| out[j as usize].position.distance(p) < r) {
            rejections += 1;
            continue;
        }
        rejections = 0;
        grid.insert(p, out.len() as u32);
        out.push(SurfacePoint { position: p, triangle: t as u32 });
    }
    Ok(out)
}

/// Bisect the sampling radius until the particle count is as close to
/// `target` as the search finds; returns `(radius, samples)`.
pub fn tune_radius(mesh: &TriMesh, target: usize, seed: u64) -> Result<(f64, Vec<SurfacePoint>), SoftBodyError> {
    let mut lo = mesh.diameter() * 1e-3;
    let mut hi = mesh.diameter();
    let mut best: Option<(f64, Vec<SurfacePoint>)> = None;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let s = poisson_sample(mesh, mid, seed)?;
        let better = best.as_ref().is_none_or(|(_, b)| s.len().abs_diff(target) < b.len().abs_diff(target));
        let n = s.len();
        if better {
            best = Some((mid, s));
        }
        if n == target {
            break;
        }
        if n > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.expect("at least one iteration"))
}
