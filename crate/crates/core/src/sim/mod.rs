//! Multi-client session harness: relay and scripted clients over emulated
//! links, the training scenegraph, optional recorder and physics server,
//! all advanced on one logical clock.

pub mod bench;
pub mod client;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

pub use client::{Injection, ScriptedClient};

use crate::analytics::{AnalyticsError, FactorRegistry, SessionReport, TotalMode};
use crate::geom::{Motor, Vec3};
use crate::net::codec::{UpdatePacket, UpdateRecord};
use crate::net::interp::{InterpBuffer, DEFAULT_RENDER_DELAY_MS, DEFAULT_SNAP_THRESHOLD_MS};
use crate::net::session::{scripted_motor, OBJECT_BASE};
use crate::net::{Link, NetProfile, SessionState, PUBLISH_ROTATION_DEG, PUBLISH_TRANSLATION_M};
use crate::physics::{demo_bodies, Command, Host, LocalTransport, PhysicsError, ServerConfig, TcpTransport};
use crate::recorder::{RecordedEvent, RecordedSession, Recorder, RecorderError, RecordingHeader};
use crate::scenegraph::{ActionOutcome, ScenarioDocument, SceneError, Scenegraph};
use crate::softbody::SoftBody;

pub const DEFAULT_TICK_HZ: u32 = 20;
pub const PHYSICS_HZ: u64 = 60;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Scene(e) => e.exit_code(),
            SimError::Physics(PhysicsError::Unreachable(_)) => 4,
            SimError::Input(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhysicsMode {
    Off,
    InProcess,
    Dissected { addr: String },
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: ScenarioDocument,
    pub clients: Vec<ScriptedClient>,
    pub profile: NetProfile,
    pub record: bool,
    pub physics: PhysicsMode,
    pub physics_objects: usize,
    pub seed: u64,
    pub tick_hz: u32,
    /// Time each client takes between its own Action attempts.
    pub action_interval_s: f64,
    /// Hard stop for scenarios that never finish.
    pub max_duration_s: f64,
    pub total_mode: TotalMode,
}

impl RunConfig {
    pub fn new(scenario: ScenarioDocument, clients: u32, seed: u64) -> Self {
        RunConfig {
            scenario,
            clients: (1..=clients).map(|id| ScriptedClient { id, object: OBJECT_BASE + id, injections: Vec::new() }).collect(),
            profile: NetProfile { jitter_ms: 5.0, loss_prob: 0.01, ..NetProfile::ideal(20.0, seed) },
            record: false,
            physics: PhysicsMode::Off,
            physics_objects: 10,
            seed,
            tick_hz: DEFAULT_TICK_HZ,
            action_interval_s: 2.0,
            max_duration_s: 600.0,
            total_mode: TotalMode::Mean,
        }
    }

    /// Give every client the same injections.
    pub fn inject(mut self, injections: &[Injection]) -> Self {
        for c in &mut self.clients {
            c.injections.extend_from_slice(injections);
        }
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.clients.is_empty() {
            return Err(SimError::Input("at least one client is required".into()));
        }
        if self.tick_hz == 0 || !PHYSICS_HZ.is_multiple_of(self.tick_hz as u64) && self.physics != PhysicsMode::Off {
            return Err(SimError::Input(format!("tick rate {} Hz must divide the {PHYSICS_HZ} Hz physics rate", self.tick_hz)));
        }
        if !(self.action_interval_s > 0.0) || !(self.max_duration_s > 0.0) {
            return Err(SimError::Input("action interval and duration must be positive".into()));
        }
        self.profile.validate().map_err(|e| SimError::Input(e.to_string()))
    }

    pub fn session_id(&self) -> String {
        format!("{:016x}", self.seed)
    }

    fn tick_us(&self) -> u64 {
        1_000_000 / self.tick_hz as u64
    }

    fn interval_ticks(&self) -> u64 {
        ((self.action_interval_s * self.tick_hz as f64).round() as u64).max(1)
    }
}

/// Cumulative network counters sampled once per simulated second.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetMetricsRow {
    pub t_s: u64,
    pub packets_sent: u64,
    pub packets_dropped: u64,
    pub bytes_sent: u64,
    pub records_accepted: u64,
    pub records_fanned_out: u64,
    pub relay_backlog: usize,
    pub max_link_queue: usize,
    pub completed_actions: usize,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: SessionReport,
    pub metrics: Vec<NetMetricsRow>,
    pub recording: Option<Vec<u8>>,
    pub outcomes: Vec<ActionOutcome>,
    pub ticks: u64,
    pub finished: bool,
}

impl RunOutput {
    pub fn metrics_csv(&self) -> Result<Vec<u8>, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.metrics {
            w.serialize(r).map_err(|e| SimError::Io(std::io::Error::other(e)))?;
        }
        w.into_inner().map_err(|e| SimError::Io(std::io::Error::other(e.to_string())))
    }

    pub fn report_json(&self) -> Result<String, SimError> {
        Ok(self.report.to_json()?)
    }
}

struct ClientRt {
    script: ScriptedClient,
    uplink: Link,
    downlink: Link,
    inbound: VecDeque<(f64, Vec<u8>)>,
    interp: InterpBuffer,
    last_sent: Option<Motor>,
    packet_tick: u32,
}

enum PhysicsRig {
    Local(Host<LocalTransport>),
    Remote(Host<TcpTransport>),
}

impl PhysicsRig {
    fn scene(&self) -> &BTreeMap<u32, Motor> {
        match self {
            PhysicsRig::Local(h) => &h.scene,
            PhysicsRig::Remote(h) => &h.scene,
        }
    }

    fn step(&mut self) -> Result<usize, PhysicsError> {
        match self {
            PhysicsRig::Local(h) => h.step(),
            PhysicsRig::Remote(h) => h.step(),
        }
    }

    fn command(&mut self, c: Vec<Command>) -> Result<(), PhysicsError> {
        match self {
            PhysicsRig::Local(h) => h.command(c),
            PhysicsRig::Remote(h) => h.command(c),
        }
    }

    fn register(&mut self, desc: crate::physics::PhysicsDescriptor, pose: crate::geom::Pose) -> Result<(), PhysicsError> {
        match self {
            PhysicsRig::Local(h) => h.register(desc, pose),
            PhysicsRig::Remote(h) => h.register(desc, pose),
        }
    }

    fn configure(&mut self, dt: f64) -> Result<(), PhysicsError> {
        match self {
            PhysicsRig::Local(h) => h.configure(dt, true),
            PhysicsRig::Remote(h) => h.configure(dt, true),
        }
    }

    /// Round-trip check so a dead server surfaces before the run starts.
    fn ping(&mut self) -> Result<(), PhysicsError> {
        match self {
            PhysicsRig::Local(h) => h.ping(1).map(drop),
            PhysicsRig::Remote(h) => h.ping(1).map(drop),
        }
    }
}

/// One running session. `step` advances one logical tick.
pub struct Harness {
    cfg: RunConfig,
    graph: Scenegraph,
    tick: u64,
    relay: SessionState,
    clients: Vec<ClientRt>,
    inbox: BinaryHeap<Reverse<(u64, u64, Vec<u8>)>>,
    seq: u64,
    recorder: Option<Recorder<Vec<u8>>>,
    physics: Option<PhysicsRig>,
    metrics: Vec<NetMetricsRow>,
    outcomes: Vec<ActionOutcome>,
    finished_at: Option<u64>,
    workload: Option<SoftBody>,
}

fn registry() -> Arc<FactorRegistry> {
    FactorRegistry::default().shared()
}

fn header_for(cfg: &RunConfig) -> RecordingHeader {
    let mut id = [0u8; 16];
    id[..8].copy_from_slice(&cfg.seed.to_le_bytes());
    id[8..].copy_from_slice(&crate::rng::derive_seed(cfg.seed, "session", 0).to_le_bytes());
    RecordingHeader::new(id, cfg.tick_hz, cfg.clients.len().min(u16::MAX as usize) as u16)
}

impl Harness {
    pub fn new(cfg: RunConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let graph = Scenegraph::load(&cfg.scenario, registry())?;
        let recorder = if cfg.record { Some(Recorder::new(Vec::new(), header_for(&cfg))?) } else { None };
        let mut h = Harness::assemble(cfg, graph, recorder)?;
        for c in &h.clients {
            h.relay.spawn(c.script.object, c.script.id, scripted_motor(c.script.id, 0.0).to_f32_precision()).map_err(|e| SimError::Input(e.to_string()))?;
        }
        h.seed_interp();
        if let Some(p) = &mut h.physics {
            for (desc, pose) in demo_bodies(h.cfg.physics_objects) {
                p.register(desc, pose)?;
            }
        }
        let joins: Vec<RecordedEvent> = h.clients.iter().map(|c| RecordedEvent::UserJoin(c.script.id)).collect();
        h.record(&joins)?;
        Ok(h)
    }

    /// Continue a recorded session from `t_us` (rounded down to a tick) with
    /// the same configuration and scripts.
    pub fn resume(cfg: RunConfig, rec: &RecordedSession, t_us: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let tick = t_us / cfg.tick_us();
        let t_us = tick * cfg.tick_us();
        let point = rec.resume(t_us, Scenegraph::load(&cfg.scenario, registry())?)?;
        let recorder = if cfg.record { Some(Recorder::continue_from(rec, t_us, Vec::new())?) } else { None };
        let mut h = Harness::assemble(cfg, point.scenegraph, recorder)?;
        h.tick = tick;
        if h.graph.is_finished() {
            h.finished_at = Some(tick);
        }
        let t_ms = t_us as f64 / 1000.0;
        for c in &mut h.clients {
            let id = c.script.id;
            let m = point.transforms.get(&c.script.object).copied().unwrap_or_else(|| scripted_motor(id, t_ms).to_f32_precision());
            h.relay.spawn(c.script.object, id, m).map_err(|e| SimError::Input(e.to_string()))?;
            c.last_sent = Some(m);
        }
        h.seed_interp();
        if let Some(p) = &mut h.physics {
            // bodies restart at their recorded poses, at rest
            for (desc, pose) in demo_bodies(h.cfg.physics_objects) {
                let pose = point.transforms.get(&desc.id).map_or(pose, |m| m.to_pose());
                p.register(desc, pose)?;
            }
        }
        Ok(h)
    }

    fn assemble(cfg: RunConfig, graph: Scenegraph, recorder: Option<Recorder<Vec<u8>>>) -> Result<Self, SimError> {
        let mut profile = cfg.profile.clone();
        profile.seed = crate::rng::derive_seed(cfg.seed, "network", 0);
        let mut relay = SessionState::new(cfg.seed as u32);
        let clients = cfg
            .clients
            .iter()
            .map(|s| {
                relay.join(s.id);
                ClientRt {
                    script: s.clone(),
                    uplink: Link::new(profile.clone(), 2 * s.id as u64),
                    downlink: Link::new(profile.clone(), 2 * s.id as u64 + 1),
                    inbound: VecDeque::new(),
                    interp: InterpBuffer::new(DEFAULT_RENDER_DELAY_MS, DEFAULT_SNAP_THRESHOLD_MS),
                    last_sent: None,
                    packet_tick: 0,
                }
            })
            .collect();
        let session = cfg.seed as u32 ^ 0x9e37;
        let dt = 1.0 / PHYSICS_HZ as f64;
        let physics = match &cfg.physics {
            PhysicsMode::Off => None,
            PhysicsMode::InProcess => Some(PhysicsRig::Local(Host::new(session, LocalTransport::new(ServerConfig { dt, ..ServerConfig::default() })))),
            PhysicsMode::Dissected { addr } => Some(PhysicsRig::Remote(Host::new(session, TcpTransport::connect(addr, Duration::from_secs(2))?))),
        };
        let mut h = Harness {
            cfg,
            graph,
            tick: 0,
            relay,
            clients,
            inbox: BinaryHeap::new(),
            seq: 0,
            recorder,
            physics,
            metrics: Vec::new(),
            outcomes: Vec::new(),
            finished_at: None,
            workload: None,
        };
        if let Some(p) = &mut h.physics {
            p.ping()?;
            p.configure(dt)?;
        }
        Ok(h)
    }

    fn seed_interp(&mut self) {
        let t = self.now_ms();
        let initial: Vec<(u32, Motor)> = self.relay.motors().iter().map(|(&k, &v)| (k, v)).collect();
        for c in &mut self.clients {
            for &(id, m) in &initial {
                c.interp.push(id, t, m);
            }
        }
    }

    /// Extra per-tick work (a soft body stepped every tick), for benchmarks.
    pub fn with_workload(mut self, body: SoftBody) -> Self {
        self.workload = Some(body);
        self
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn now_us(&self) -> u64 {
        self.tick * self.cfg.tick_us()
    }

    fn now_ms(&self) -> f64 {
        self.now_us() as f64 / 1000.0
    }

    pub fn graph(&self) -> &Scenegraph {
        &self.graph
    }

    pub fn is_done(&self) -> bool {
        self.finished_at.is_some() || self.now_us() as f64 >= self.cfg.max_duration_s * 1e6
    }

    /// Current scene: relay objects plus physics bodies.
    pub fn scene(&self) -> BTreeMap<u32, Motor> {
        let mut scene = self.relay.motors().clone();
        if let Some(p) = &self.physics {
            scene.extend(p.scene().iter().map(|(&k, &v)| (k, v)));
        }
        scene
    }

    /// Largest coefficient gap between any client's view and the relay.
    pub fn view_error(&self) -> f64 {
        let now = self.now_ms();
        let mut worst = 0.0f64;
        for c in &self.clients {
            for (&object, auth) in self.relay.motors() {
                let seen = if object == c.script.object { c.last_sent } else { c.interp.sample(object, now) };
                worst = worst.max(seen.map_or(f64::INFINITY, |m| m.max_coefficient_diff_up_to_sign(auth)));
            }
        }
        worst
    }

    /// Advance one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.tick += 1;
        let now = self.now_ms();
        let now_us = self.now_us();
        self.exchange(now);
        let events = self.act(now_us)?;
        self.step_physics()?;
        if let Some(sb) = &mut self.workload {
            let tick_s = 1.0 / self.cfg.tick_hz as f64;
            let n = (tick_s / crate::softbody::DEFAULT_DT).ceil().max(1.0);
            for _ in 0..n as u32 {
                sb.step(tick_s / n).map_err(|e| SimError::Input(e.to_string()))?;
            }
        }
        self.record(&events)?;
        if self.tick.is_multiple_of(self.cfg.tick_hz as u64) {
            self.sample_metrics();
        }
        if self.finished_at.is_none() && self.graph.is_finished() {
            self.finished_at = Some(self.tick);
        }
        Ok(())
    }

    fn exchange(&mut self, now: f64) {
        let session = self.relay.session_id;
        for c in &mut self.clients {
            let motor = scripted_motor(c.script.id, now);
            if c.last_sent.is_some_and(|p| !p.differs_from(&motor, PUBLISH_TRANSLATION_M, PUBLISH_ROTATION_DEG.to_radians())) {
                continue;
            }
            c.packet_tick += 1;
            c.last_sent = Some(motor.to_f32_precision());
            let bytes = UpdatePacket::update(session, c.script.id, c.packet_tick, vec![UpdateRecord { object_id: c.script.object, motor }])
                .encode()
                .expect("single record");
            if let Some(arrival) = c.uplink.transmit(now, bytes.len()) {
                self.seq += 1;
                self.inbox.push(Reverse(((arrival * 1000.0).round() as u64, self.seq, bytes)));
            }
        }
        let now_key = (now * 1000.0).round() as u64;
        let mut incoming = Vec::new();
        while self.inbox.peek().is_some_and(|Reverse((a, _, _))| *a <= now_key) {
            let Reverse((_, _, bytes)) = self.inbox.pop().expect("peeked");
            incoming.push(UpdatePacket::decode(&bytes).expect("client packet"));
        }
        let tick_ms = self.cfg.tick_us() as f64 / 1000.0;
        for (client, packets) in self.relay.relay_tick(incoming) {
            let Some(c) = self.clients.iter_mut().find(|c| c.script.id == client) else { continue };
            for p in packets {
                let bytes = p.encode().expect("bounded fan-out");
                if let Some(arrival) = c.downlink.transmit(now, bytes.len()) {
                    c.inbound.push_back((arrival, bytes));
                }
            }
        }
        let relay_tick = self.relay.tick();
        let base_ms = now - relay_tick as f64 * tick_ms;
        for c in &mut self.clients {
            c.inbound.make_contiguous().sort_by(|a, b| a.0.total_cmp(&b.0));
            while c.inbound.front().is_some_and(|(a, _)| *a <= now) {
                let (_, bytes) = c.inbound.pop_front().expect("peeked");
                let p = UpdatePacket::decode(&bytes).expect("relay packet");
                let stamp = base_ms + p.tick as f64 * tick_ms;
                for r in p.records {
                    c.interp.push(r.object_id, stamp, r.motor);
                }
            }
            c.interp.prune(now);
        }
    }

    /// Clients whose turn it is pick and perform an Action. Events take
    /// effect at the tick they are produced.
    fn act(&mut self, now_us: u64) -> Result<Vec<RecordedEvent>, SimError> {
        let interval = self.cfg.interval_ticks();
        let n = self.clients.len() as u64;
        let mut events = Vec::new();
        for (i, c) in self.clients.iter().enumerate() {
            if self.graph.is_finished() {
                break;
            }
            let offset = (i as u64 * interval) / n;
            if self.tick < interval || self.tick % interval != offset {
                continue;
            }
            let Some(id) = c.script.choose(&self.graph, now_us) else { continue };
            let node = self.graph.node(&id).expect("frontier node exists");
            let ev = c.script.act(node, now_us);
            let outcome = self.graph.perform_action(&ev)?;
            log::debug!("t={}us client {} -> {}", now_us, c.script.id, outcome.message());
            self.outcomes.push(outcome);
            events.push(RecordedEvent::Action(ev));
        }
        Ok(events)
    }

    fn step_physics(&mut self) -> Result<(), SimError> {
        let Some(p) = &mut self.physics else { return Ok(()) };
        let per_tick = PHYSICS_HZ / self.cfg.tick_hz as u64;
        // a periodic nudge keeps bodies from all falling asleep
        if self.tick.is_multiple_of(2 * self.cfg.tick_hz as u64) && self.cfg.physics_objects > 0 {
            let id = (self.tick / (2 * self.cfg.tick_hz as u64)) as u32 % self.cfg.physics_objects as u32 + 1;
            p.command(vec![Command::Impulse { id, impulse: Vec3::new(0.05, 0.8, 0.0) }])?;
        }
        for _ in 0..per_tick {
            p.step()?;
        }
        Ok(())
    }

    fn record(&mut self, events: &[RecordedEvent]) -> Result<(), SimError> {
        if self.recorder.is_none() {
            return Ok(());
        }
        let scene = self.scene();
        let t = self.now_us();
        self.recorder.as_mut().expect("checked").record_frame(&scene, events, t)?;
        Ok(())
    }

    fn sample_metrics(&mut self) {
        let cs = &self.clients;
        self.metrics.push(NetMetricsRow {
            t_s: self.now_us() / 1_000_000,
            packets_sent: cs.iter().map(|c| c.uplink.sent + c.downlink.sent).sum(),
            packets_dropped: cs.iter().map(|c| c.uplink.dropped + c.downlink.dropped).sum(),
            bytes_sent: cs.iter().map(|c| c.uplink.bytes + c.downlink.bytes).sum(),
            records_accepted: self.relay.counters.accepted,
            records_fanned_out: self.relay.counters.fanned_out,
            relay_backlog: self.inbox.len(),
            max_link_queue: cs.iter().map(|c| c.uplink.max_queue.max(c.downlink.max_queue)).max().unwrap_or(0),
            completed_actions: self.graph.completed_count(),
        });
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RunOutput, SimError> {
        let end = self.finished_at.unwrap_or(self.tick);
        let report = self.graph.report(&self.cfg.session_id(), 0, end * self.cfg.tick_us(), self.cfg.total_mode)?;
        let recording = match self.recorder {
            Some(r) => Some(r.finish()?),
            None => None,
        };
        Ok(RunOutput { report, metrics: self.metrics, recording, outcomes: self.outcomes, ticks: self.tick, finished: self.finished_at.is_some() })
    }
}

pub fn run(cfg: RunConfig) -> Result<RunOutput, SimError> {
    let mut h = Harness::new(cfg)?;
    h.run_to_end()?;
    h.finish()
}

/// Resume a recording at `t_us` and run the remainder with `cfg`'s scripts.
pub fn resume(cfg: RunConfig, rec: &RecordedSession, t_us: u64) -> Result<RunOutput, SimError> {
    let mut h = Harness::resume(cfg, rec, t_us)?;
    h.run_to_end()?;
    h.finish()
}
