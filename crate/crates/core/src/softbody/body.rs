//! Particle layer bound to a surface mesh.

use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::sampling::{HashGrid, SurfacePoint};
use super::SoftBodyError;
use crate::geom::Vec3;

/// Distances below this are clamped in the inverse-distance kernels.
pub const DISTANCE_CLAMP_M: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftBodyParams {
    /// Poisson radius `r` (meters).
    pub radius: f64,
    pub connect_factor: f64,
    /// Binding radius as a multiple of `r`.
    pub bind_factor: f64,
    /// Return rate `k` (1/s).
    pub stiffness: f64,
    /// One-ring propagation fraction `β`.
    pub propagation: f64,
    /// `Some(c)` switches to second-order spring dynamics with damping `c` (1/s).
    #[serde(default)]
    pub damping: Option<f64>,
}

impl SoftBodyParams {
    pub fn with_radius(radius: f64) -> Self {
        SoftBodyParams { radius, connect_factor: 2.5, bind_factor: 2.0, stiffness: 10.0, propagation: 0.5, damping: None }
    }

    pub fn bind_radius(&self) -> f64 {
        self.bind_factor * self.radius
    }

    pub fn connect_radius(&self) -> f64 {
        self.connect_factor * self.radius
    }

    fn validate(&self) -> Result<(), SoftBodyError> {
        let positive = [("radius", self.radius), ("connect_factor", self.connect_factor), ("bind_factor", self.bind_factor)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SoftBodyError::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.stiffness >= 0.0) || !(self.propagation >= 0.0) || self.damping.is_some_and(|c| !(c >= 0.0)) {
            return Err(SoftBodyError::InvalidParam("stiffness, propagation and damping must be non-negative".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_DT: f64 = 1.0 / 90.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub anchor: Vec3,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Sorted, symmetric.
    pub neighbors: Vec<u32>,
    /// Triangle the anchor lies on.
    pub triangle: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Binding {
    pub vertex: u32,
    pub particle: u32,
    pub weight: f64,
}

/// Inverse-distance weights `(1/dᵢ)/Σ(1/dⱼ)`. Points within the clamp
/// distance take the whole weight (split evenly if several).
pub fn inverse_distance_weights(distances: &[f64]) -> Vec<f64> {
    let coincident = distances.iter().filter(|&&d| d <= DISTANCE_CLAMP_M).count();
    if coincident > 0 {
        return distances.iter().map(|&d| if d <= DISTANCE_CLAMP_M { 1.0 / coincident as f64 } else { 0.0 }).collect();
    }
    let inv: Vec<f64> = distances.iter().map(|&d| 1.0 / d.max(DISTANCE_CLAMP_M)).collect();
    let sum: f64 = inv.iter().sum();
    inv.into_iter().map(|w| w / sum).collect()
}

#[derive(Clone, Debug)]
pub struct SoftBody {
    pub params: SoftBodyParams,
    /// Current (deformed) surface.
    pub mesh: TriMesh,
    /// Rest positions, parallel to `mesh.vertices`.
    pub rest: Vec<Vec3>,
    pub particles: Vec<Particle>,
    /// Per-vertex `(particle, weight)`; empty means unbound.
    bindings: Vec<Vec<(u32, f64)>>,
    particle_vertices: Vec<Vec<u32>>,
}

impl SoftBody {
    pub fn build(mesh: TriMesh, anchors: &[SurfacePoint], params: SoftBodyParams) -> Result<Self, SoftBodyError> {
        params.validate()?;
        if let Some(a) = anchors.iter().find(|a| a.triangle as usize >= mesh.triangles.len()) {
            return Err(SoftBodyError::Range { index: a.triangle as usize, len: mesh.triangles.len() });
        }
        let particles: Vec<Particle> = anchors
            .iter()
            .map(|a| Particle { anchor: a.position, position: a.position, velocity: Vec3::ZERO, neighbors: Vec::new(), triangle: a.triangle })
            .collect();
        let rest = mesh.vertices.clone();
        let mut sb =
            SoftBody { params, bindings: vec![Vec::new(); mesh.vertices.len()], particle_vertices: vec![Vec::new(); particles.len()], mesh, rest, particles };
        sb.connect_particles();
        let all: Vec<u32> = (0..sb.rest.len() as u32).collect();
        sb.rebind_vertices(&all, |_, _| true);
        Ok(sb)
    }

    /// Assemble from parts (used when splitting bodies).
    pub(crate) fn from_parts(params: SoftBodyParams, mesh: TriMesh, rest: Vec<Vec3>, particles: Vec<Particle>, bindings: Vec<Vec<(u32, f64)>>) -> Self {
        let mut sb = SoftBody { params, particle_vertices: vec![Vec::new(); particles.len()], mesh, rest, particles, bindings };
        sb.rebuild_reverse_index();
        sb
    }

    fn connect_particles(&mut self) {
        let cr = self.params.connect_radius();
        let mut grid = HashGrid::new(cr);
        for (i, p) in self.particles.iter().enumerate() {
            grid.insert(p.anchor, i as u32);
        }
        for i in 0..self.particles.len() {
            let a = self.particles[i].anchor;
            let mut n: Vec<u32> = grid.near(a).filter(|&j| j as usize != i && self.particles[j as usize].anchor.distance(a) < cr).collect();
            n.sort_unstable();
            self.particles[i].neighbors = n;
        }
    }

    fn rebuild_reverse_index(&mut self) {
        self.particle_vertices = vec![Vec::new(); self.particles.len()];
        for (v, b) in self.bindings.iter().enumerate() {
            for &(p, _) in b {
                self.particle_vertices[p as usize].push(v as u32);
            }
        }
    }

    /// Re-run binding for `vertices` against particles accepted by `allow(vertex, particle)`.
    pub(crate) fn rebind_vertices(&mut self, vertices: &[u32], allow: impl Fn(u32, u32) -> bool) {
        let br = self.params.bind_radius();
        let mut grid = HashGrid::new(br);
        for (i, p) in self.particles.iter().enumerate() {
            grid.insert(p.anchor, i as u32);
        }
        if self.bindings.len() < self.rest.len() {
            self.bindings.resize(self.rest.len(), Vec::new());
        }
        for &v in vertices {
            let x = self.rest[v as usize];
            let mut cand: Vec<(u32, f64)> =
                grid.near(x).map(|j| (j, self.particles[j as usize].anchor.distance(x))).filter(|&(j, d)| d <= br && allow(v, j)).collect();
            cand.sort_unstable_by_key(|c| c.0);
            let w = inverse_distance_weights(&cand.iter().map(|c| c.1).collect::<Vec<_>>());
            self.bindings[v as usize] = cand.iter().zip(w).filter(|(_, w)| *w > 0.0).map(|(c, w)| (c.0, w)).collect();
        }
        self.rebuild_reverse_index();
        for &v in vertices {
            self.update_vertex(v);
        }
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn vertex_bindings(&self, v: u32) -> &[(u32, f64)] {
        &self.bindings[v as usize]
    }

    pub fn bindings(&self) -> impl Iterator<Item = Binding> + '_ {
        self.bindings.iter().enumerate().flat_map(|(v, b)| b.iter().map(move |&(p, w)| Binding { vertex: v as u32, particle: p, weight: w }))
    }

    pub fn is_bound(&self, v: u32) -> bool {
        !self.bindings[v as usize].is_empty()
    }

    pub(crate) fn raw_bindings(&self) -> &[Vec<(u32, f64)>] {
        &self.bindings
    }

    pub(crate) fn raw_bindings_mut(&mut self) -> &mut Vec<Vec<(u32, f64)>> {
        &mut self.bindings
    }

    pub(crate) fn refresh_reverse_index(&mut self) {
        self.rebuild_reverse_index();
    }

    fn update_vertex(&mut self, v: u32) {
        let mut x = self.rest[v as usize];
        for &(p, w) in &self.bindings[v as usize] {
            let p = &self.particles[p as usize];
            x += (p.position - p.anchor) * w;
        }
        self.mesh.vertices[v as usize] = x;
    }

    pub fn update_all_vertices(&mut self) {
        for v in 0..self.rest.len() as u32 {
            self.update_vertex(v);
        }
    }

    /// Move particle `i` by `delta`; its one-ring follows by `β·min(1, r/d)·Δ`.
    pub fn displace_particle(&mut self, i: usize, delta: Vec3) -> Result<(), SoftBodyError> {
        if i >= self.particles.len() {
            return Err(SoftBodyError::Range { index: i, len: self.particles.len() });
        }
        let (r, beta) = (self.params.radius, self.params.propagation);
        let anchor = self.particles[i].anchor;
        self.particles[i].position += delta;
        let ring = self.particles[i].neighbors.clone();
        for &j in &ring {
            let p = &mut self.particles[j as usize];
            let d = p.anchor.distance(anchor).max(DISTANCE_CLAMP_M);
            p.position += delta * (beta * (r / d).min(1.0));
        }
        let mut touched: Vec<u32> = self.particle_vertices[i].clone();
        for &j in &ring {
            touched.extend_from_slice(&self.particle_vertices[j as usize]);
        }
        touched.sort_unstable();
        touched.dedup();
        for v in touched {
            self.update_vertex(v);
        }
        Ok(())
    }

    /// Advance the return dynamics by `dt` seconds.
    pub fn step(&mut self, dt: f64) -> Result<(), SoftBodyError> {
        if !(dt > 0.0 && dt <= 1.0 / 30.0 + 1e-12) {
            return Err(SoftBodyError::InvalidParam(format!("dt must be in (0, 1/30], got {dt}")));
        }
        let k = self.params.stiffness;
        for p in &mut self.particles {
            let offset = p.position - p.anchor;
            match self.params.damping {
                None => p.velocity = offset * -k,
                Some(c) => p.velocity += (offset * (-k * k) - p.velocity * c) * dt,
            }
            p.position += p.velocity * dt;
        }
        self.update_all_vertices();
        Ok(())
    }

    /// Largest particle offset from its anchor.
    pub fn max_offset(&self) -> f64 {
        self.particles.iter().map(|p| p.position.distance(p.anchor)).fold(0.0, f64::max)
    }

    /// `Σ|xᵢ − aᵢ|²` over particles.
    pub fn displacement_energy(&self) -> f64 {
        self.particles.iter().map(|p| (p.position - p.anchor).norm_squared()).sum()
    }

    /// Largest deviation of a bound vertex's weight sum from 1.
    pub fn partition_of_unity_error(&self) -> f64 {
        self.bindings.iter().filter(|b| !b.is_empty()).map(|b| (b.iter().map(|x| x.1).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn neighbors_symmetric(&self) -> bool {
        self.particles.iter().enumerate().all(|(i, p)| p.neighbors.iter().all(|&j| self.particles[j as usize].neighbors.binary_search(&(i as u32)).is_ok()))
    }
}
