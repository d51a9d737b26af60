//! Benchmarks emitting median/min/max timing tables.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::json;

use super::{Harness, RunConfig, SimError};
use crate::cut::{cut, tear_segment, CutPath, CutStats, TearFront};
use crate::geom::Vec3;
use crate::net::{run_session, NetProfile, SessionSimConfig, SessionSimReport};
use crate::physics::{demo_bodies, Host, PhysicsWorld, ServerConfig, TcpTransport, WorldConfig};
use crate::scenegraph::{ActionSpec, ScenarioDocument};
use crate::softbody::{poisson_sample, tune_radius, SoftBody, SoftBodyParams, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchKind {
    Softbody,
    Cut,
    Tear,
    Net,
    Recorder,
    Physics,
}

impl FromStr for BenchKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Ok(match s {
            "softbody" => BenchKind::Softbody,
            "cut" => BenchKind::Cut,
            "tear" => BenchKind::Tear,
            "net" => BenchKind::Net,
            "recorder" => BenchKind::Recorder,
            "physics" => BenchKind::Physics,
            other => return Err(SimError::Input(format!("unknown bench kind '{other}'"))),
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchParams {
    /// OBJ mesh; the built-in liver-scale ellipsoid when absent.
    pub mesh: Option<PathBuf>,
    pub particles: usize,
    pub runs: usize,
    pub seed: u64,
    pub clients: u32,
    pub duration_s: f64,
    /// Harness ticks per configuration in the recorder bench.
    pub ticks: u64,
    pub physics_objects: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams { mesh: None, particles: 191, runs: 100, seed: 7, clients: 300, duration_s: 60.0, ticks: 1200, physics_objects: 20 }
    }
}

/// One table row. `ms` is the median over `runs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub model: String,
    pub vertices: usize,
    pub triangles: usize,
    pub particles: usize,
    pub op: String,
    pub phase: String,
    pub runs: usize,
    pub ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub fps_equivalent: f64,
    pub note: String,
}

pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| SimError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// (median, min, max)
pub fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    (median, s[0], s[n - 1])
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

struct Model {
    name: String,
    body: SoftBody,
}

impl Model {
    fn row(&self, op: &str, phase: &str, samples: &[f64], note: String) -> BenchRow {
        let (median, min, max) = summarize(samples);
        BenchRow {
            model: self.name.clone(),
            vertices: self.body.mesh.vertices.len(),
            triangles: self.body.mesh.triangles.len(),
            particles: self.body.particle_count(),
            op: op.into(),
            phase: phase.into(),
            runs: samples.len(),
            ms: median,
            min_ms: min,
            max_ms: max,
            fps_equivalent: if median > 0.0 { 1000.0 / median } else { f64::INFINITY },
            note,
        }
    }
}

fn load_model(p: &BenchParams) -> Result<Model, SimError> {
    let (name, mesh) = match &p.mesh {
        Some(path) => {
            let mesh = TriMesh::load_obj(path).map_err(|e| SimError::Input(format!("mesh {}: {e}", path.display())))?;
            (path.file_stem().map_or("mesh".into(), |s| s.to_string_lossy().into_owned()), mesh)
        }
        None => ("liver".to_string(), TriMesh::liver_scale()),
    };
    let (r, anchors) = tune_radius(&mesh, p.particles, p.seed).map_err(|e| SimError::Input(e.to_string()))?;
    let body = SoftBody::build(mesh, &anchors, SoftBodyParams::with_radius(r)).map_err(|e| SimError::Input(e.to_string()))?;
    Ok(Model { name, body })
}

pub fn run_bench(kind: BenchKind, p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    if p.runs == 0 {
        return Err(SimError::Input("runs must be at least 1".into()));
    }
    match kind {
        BenchKind::Softbody => bench_softbody(p),
        BenchKind::Cut => bench_cut(p),
        BenchKind::Tear => bench_tear(p),
        BenchKind::Net => bench_net(p),
        BenchKind::Recorder => bench_recorder(p),
        BenchKind::Physics => bench_physics(p),
    }
}

fn bench_softbody(p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    let m = load_model(p)?;
    let mut sb = m.body.clone();
    let (mut step, mut update) = (Vec::new(), Vec::new());
    let dt = crate::softbody::DEFAULT_DT;
    for i in 0..p.runs {
        let k = i % sb.particle_count().max(1);
        sb.displace_particle(k, Vec3::new(0.0, 0.002, 0.0)).map_err(|e| SimError::Input(e.to_string()))?;
        let t = Instant::now();
        sb.step(dt).map_err(|e| SimError::Input(e.to_string()))?;
        step.push(ms(t.elapsed()));
        let t = Instant::now();
        sb.update_all_vertices();
        update.push(ms(t.elapsed()));
    }
    Ok(vec![m.row("step", "relax", &step, String::new()), m.row("step", "update_vertices", &update, String::new())])
}

/// Transverse plane through the mesh center, swept across its full extent.
pub fn transverse_cut(mesh: &TriMesh) -> Result<CutPath, SimError> {
    let (lo, hi) = mesh.bounds();
    let c = (lo + hi) * 0.5;
    let e = mesh.diameter();
    CutPath::sweep(Vec3::new(c.x, c.y - e, c.z + e), Vec3::new(c.x, c.y - e, c.z - e), Vec3::new(0.0, 2.0 * e, 0.0), 4)
        .map_err(|e| SimError::Input(e.to_string()))
}

fn stat_rows(m: &Model, op: &str, stats: &[CutStats], note: String) -> Vec<BenchRow> {
    let col = |f: fn(&CutStats) -> f64| stats.iter().map(f).collect::<Vec<_>>();
    vec![
        m.row(op, "perform", &col(|s| s.perform_ms), note.clone()),
        m.row(op, "update_particles", &col(|s| s.update_particles_ms), note.clone()),
        m.row(op, "total", &col(|s| s.total_ms), note),
    ]
}

fn bench_cut(p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    let m = load_model(p)?;
    let path = transverse_cut(&m.body.mesh)?;
    let mut stats = Vec::with_capacity(p.runs);
    for _ in 0..p.runs {
        stats.push(cut(&m.body, &path).map_err(|e| SimError::Input(e.to_string()))?.stats);
    }
    let s0 = stats[0];
    let note = format!("intersection_points={} triangles_split={} components={}", s0.intersection_points, s0.triangles_split, s0.components);
    Ok(stat_rows(&m, "cut", &stats, note))
}

/// A tear along the mesh's +z face, from 35% left of center to 25% right,
/// through mesh vertices so every point lies on the surface.
pub fn tear_points(mesh: &TriMesh, segments: usize) -> Vec<Vec3> {
    let (lo, hi) = mesh.bounds();
    let c = (lo + hi) * 0.5;
    let half = (hi.x - lo.x) * 0.5;
    let mut pts: Vec<Vec3> = Vec::new();
    for i in 0..=segments {
        let x = c.x + half * (-0.35 + 0.6 * i as f64 / segments as f64);
        let goal = Vec3::new(x, c.y, hi.z);
        let v = mesh.vertices.iter().copied().min_by(|a, b| a.distance(goal).total_cmp(&b.distance(goal))).expect("non-empty mesh");
        // keep the surface point but pull it toward the goal line
        let q = Vec3::new(x, v.y, v.z);
        if pts.last().is_none_or(|l: &Vec3| l.distance(q) > 1e-9) {
            pts.push(q);
        }
    }
    pts
}

fn bench_tear(p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    let m = load_model(p)?;
    let pts = tear_points(&m.body.mesh, 6);
    let mut base = m.body.clone();
    let front = TearFront::start(&mut base, pts[0], None).map_err(|e| SimError::Input(e.to_string()))?;
    let mut stats = Vec::new();
    for _ in 0..p.runs {
        let (mut sb, mut f) = (base.clone(), front.clone());
        for q in &pts[1..] {
            stats.push(tear_segment(&mut sb, &mut f, *q).map_err(|e| SimError::Input(e.to_string()))?);
        }
    }
    let note = format!("segments={} per_segment", pts.len() - 1);
    Ok(stat_rows(&m, "tear", &stats, note))
}

pub fn net_config(clients: u32, duration_s: f64, seed: u64) -> SessionSimConfig {
    SessionSimConfig {
        clients,
        updates_per_s: 10.0,
        duration_s,
        profile: NetProfile { jitter_ms: 5.0, loss_prob: 0.01, ..NetProfile::ideal(20.0, seed) },
        ..SessionSimConfig::default()
    }
}

fn net_row(phase: &str, ms: f64, r: &SessionSimReport, note: String) -> BenchRow {
    BenchRow {
        model: format!("session-{}", r.clients),
        vertices: 0,
        triangles: 0,
        particles: 0,
        op: "net".into(),
        phase: phase.into(),
        runs: 1,
        ms,
        min_ms: ms,
        max_ms: ms,
        fps_equivalent: if ms > 0.0 { 1000.0 / ms } else { f64::INFINITY },
        note,
    }
}

fn bench_net(p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    let r = run_session(&net_config(p.clients, p.duration_s, p.seed));
    let throughput = r.records_fanned_out as f64 / r.simulated_s;
    let note = format!(
        "converged={} max_err={:.3e} records_per_s={:.0} dropped={} max_link_queue={} max_backlog={}",
        r.converged, r.max_coefficient_error, throughput, r.packets_dropped, r.max_link_queue, r.max_relay_backlog
    );
    Ok(vec![net_row("wall", r.wall_ms, &r, note.clone()), net_row("convergence_lag", r.convergence_lag_ms.unwrap_or(f64::NAN), &r, note)])
}

/// Long linear scenario for steady-state load: alternating inserts and
/// questions, enough to keep clients busy for the whole benchmark.
pub fn reference_scenario(actions: usize) -> ScenarioDocument {
    let specs: Vec<ActionSpec> = (0..actions)
        .map(|i| {
            let v = if i % 2 == 0 {
                json!({"id": format!("a{i}"), "prototype": "insert",
                       "params": {"target": {"position": [0.01 * (i % 50) as f64, 0.9, 0.2]}},
                       "scoring": [{"kind": "velocity", "v_max": 0.5}]})
            } else {
                json!({"id": format!("a{i}"), "prototype": "question",
                       "params": {"prompt": "ok?", "options": ["yes", "no"], "correct": ["yes"]}})
            };
            serde_json::from_value(v).expect("static action spec")
        })
        .collect();
    let edges = (1..actions).map(|i| (format!("a{}", i - 1), format!("a{i}"))).collect();
    ScenarioDocument { version: 1, name: "reference".into(), actions: specs, edges, alt_paths: Vec::new() }
}

/// Step rate of the reference session with and without recording.
#[derive(Clone, Debug, Serialize)]
pub struct RecorderOverhead {
    pub ticks: u64,
    pub avg_fps_without: f64,
    pub avg_fps_with: f64,
    pub min_fps_without: f64,
    pub min_fps_with: f64,
    pub max_fps_without: f64,
    pub max_fps_with: f64,
    pub bytes_per_min: f64,
}

impl RecorderOverhead {
    pub fn ratio(&self) -> f64 {
        self.avg_fps_with / self.avg_fps_without
    }
}

/// 10 moving objects at 20 Hz with 5 events/s, a liver soft body stepped
/// each tick as the engine workload. The two harnesses are stepped
/// alternately so both see the same machine conditions.
pub fn recorder_overhead(ticks: u64, seed: u64) -> Result<RecorderOverhead, SimError> {
    let clients = 10;
    let mut cfg = RunConfig::new(reference_scenario((ticks as usize / 40 + 2) * clients + 10), clients as u32, seed);
    cfg.action_interval_s = 2.0;
    let mesh = TriMesh::liver_scale();
    let anchors = poisson_sample(&mesh, 0.02, seed).map_err(|e| SimError::Input(e.to_string()))?;
    let body = SoftBody::build(mesh, &anchors, SoftBodyParams::with_radius(0.02)).map_err(|e| SimError::Input(e.to_string()))?;
    let mut plain = Harness::new(cfg.clone())?.with_workload(body.clone());
    cfg.record = true;
    let mut recorded = Harness::new(cfg)?.with_workload(body);

    let window = 20u64;
    let (mut t_plain, mut t_rec) = (Vec::new(), Vec::new());
    let (mut acc_p, mut acc_r) = (0.0, 0.0);
    for k in 1..=ticks {
        let t = Instant::now();
        plain.step()?;
        acc_p += t.elapsed().as_secs_f64();
        let t = Instant::now();
        recorded.step()?;
        acc_r += t.elapsed().as_secs_f64();
        if k % window == 0 {
            t_plain.push(window as f64 / acc_p);
            t_rec.push(window as f64 / acc_r);
            acc_p = 0.0;
            acc_r = 0.0;
        }
    }
    let avg = |v: &[f64]| v.len() as f64 / v.iter().map(|f| 1.0 / f).sum::<f64>();
    let (_, min_p, max_p) = summarize(&t_plain);
    let (_, min_r, max_r) = summarize(&t_rec);
    let bytes = recorded.finish()?.recording.map_or(0, |r| r.len());
    let minutes = ticks as f64 / 20.0 / 60.0;
    Ok(RecorderOverhead {
        ticks,
        avg_fps_without: avg(&t_plain),
        avg_fps_with: avg(&t_rec),
        min_fps_without: min_p,
        min_fps_with: min_r,
        max_fps_without: max_p,
        max_fps_with: max_r,
        bytes_per_min: bytes as f64 / minutes,
    })
}

fn fps_row(phase: &str, without: f64, with: f64, note: String) -> BenchRow {
    BenchRow {
        model: "reference-session".into(),
        vertices: 0,
        triangles: 0,
        particles: 0,
        op: "recorder".into(),
        phase: phase.into(),
        runs: 1,
        ms: 1000.0 / with,
        min_ms: 1000.0 / with,
        max_ms: 1000.0 / with,
        fps_equivalent: with,
        note: format!("fps_without={without:.2} fps_with={with:.2} {note}"),
    }
}

fn bench_recorder(p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    let o = recorder_overhead(p.ticks, p.seed)?;
    let note = format!("ratio={:.4} bytes_per_min={:.0}", o.ratio(), o.bytes_per_min);
    Ok(vec![
        fps_row("average", o.avg_fps_without, o.avg_fps_with, note.clone()),
        fps_row("min", o.min_fps_without, o.min_fps_with, note.clone()),
        fps_row("max", o.max_fps_without, o.max_fps_with, note),
    ])
}

/// In-process world vs the same bodies behind a loopback TCP server.
#[derive(Clone, Debug, Serialize)]
pub struct PhysicsComparison {
    pub steps: u64,
    pub objects: usize,
    /// Largest per-object position gap over all steps, meters.
    pub max_position_diff: f64,
    /// Two hosts with identical scenes on one server saw identical streams.
    pub sessions_identical: bool,
    pub in_process_us: Vec<f64>,
    pub dissected_us: Vec<f64>,
}

impl PhysicsComparison {
    /// Median extra time per step caused by dissection, microseconds.
    pub fn overhead_us(&self) -> f64 {
        summarize(&self.dissected_us).0 - summarize(&self.in_process_us).0
    }
}

pub fn physics_comparison(objects: usize, steps: u64) -> Result<PhysicsComparison, SimError> {
    let server = crate::physics::spawn_server("127.0.0.1:0", ServerConfig::default())?;
    let addr = server.addr.to_string();
    let bodies = demo_bodies(objects);
    let mut world = PhysicsWorld::new(WorldConfig::default());
    let mut hosts = Vec::new();
    for session in [1u32, 2] {
        let mut h = Host::new(session, TcpTransport::connect(&addr, Duration::from_secs(2))?);
        h.configure(world.config.dt, world.config.ground)?;
        hosts.push(h);
    }
    for (d, pose) in &bodies {
        world.register(*d, *pose)?;
        for h in &mut hosts {
            h.register(*d, *pose)?;
        }
    }
    let (mut max_diff, mut identical) = (0.0f64, true);
    let (mut local, mut remote) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        let t = Instant::now();
        world.step();
        local.push(t.elapsed().as_secs_f64() * 1e6);
        for h in &mut hosts {
            h.step()?;
        }
        remote.push(*hosts[0].round_trips_us.last().expect("step recorded"));
        for (d, _) in &bodies {
            let p = world.position(d.id).expect("registered");
            let q = hosts[0].scene[&d.id].translation();
            max_diff = max_diff.max(p.distance(q));
        }
        identical &= hosts[0].scene == hosts[1].scene;
    }
    drop(hosts);
    server.stop();
    Ok(PhysicsComparison { steps, objects, max_position_diff: max_diff, sessions_identical: identical, in_process_us: local, dissected_us: remote })
}

fn bench_physics(p: &BenchParams) -> Result<Vec<BenchRow>, SimError> {
    let c = physics_comparison(p.physics_objects, p.runs.max(600) as u64)?;
    let budget_us = 1e6 / 60.0;
    let row = |phase: &str, us: &[f64], note: String| {
        let ms: Vec<f64> = us.iter().map(|u| u / 1e3).collect();
        let (median, min, max) = summarize(&ms);
        BenchRow {
            model: format!("bodies-{}", c.objects),
            vertices: 0,
            triangles: 0,
            particles: 0,
            op: "physics_step".into(),
            phase: phase.into(),
            runs: ms.len(),
            ms: median,
            min_ms: min,
            max_ms: max,
            fps_equivalent: 1000.0 / median,
            note,
        }
    };
    let note = format!(
        "overhead_us={:.1} budget_fraction={:.4} max_position_diff={:.3e} sessions_identical={}",
        c.overhead_us(),
        c.overhead_us() / budget_us,
        c.max_position_diff,
        c.sessions_identical
    );
    Ok(vec![row("in_process", &c.in_process_us, note.clone()), row("dissected_loopback", &c.dissected_us, note)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchParams {
        BenchParams { runs: 3, clients: 6, duration_s: 2.0, ticks: 60, physics_objects: 5, ..BenchParams::default() }
    }

    #[test]
    fn summarize_matches_sorted_oracle() {
        assert_eq!(summarize(&[3.0, 1.0, 2.0]), (2.0, 1.0, 3.0));
        assert_eq!(summarize(&[4.0, 1.0, 3.0, 2.0]), (2.5, 1.0, 4.0));
    }

    #[test]
    fn cut_bench_reports_crossings() {
        let rows = run_bench(BenchKind::Cut, &small()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].note.contains("intersection_points=128"), "{}", rows[0].note);
        assert_eq!(rows[0].vertices, 514);
        for r in &rows {
            assert!(r.min_ms <= r.ms && r.ms <= r.max_ms);
        }
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("model,vertices,triangles,particles,op,phase,runs,ms,min_ms,max_ms,fps_equivalent,note"));
    }

    #[test]
    fn every_kind_runs() {
        for k in ["softbody", "tear", "net", "recorder", "physics"] {
            let rows = run_bench(k.parse().unwrap(), &small()).unwrap();
            assert!(!rows.is_empty(), "{k}");
        }
        assert!("nope".parse::<BenchKind>().is_err());
    }

    #[test]
    fn missing_mesh_is_an_input_error() {
        let p = BenchParams { mesh: Some("/nonexistent/mesh.obj".into()), ..small() };
        assert!(matches!(run_bench(BenchKind::Cut, &p), Err(SimError::Input(_))));
    }
}
