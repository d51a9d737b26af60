use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::message::{code, Command, PhysicsMessage};
use super::world::{PhysicsWorld, WorldConfig, DEFAULT_DT};
use super::PhysicsError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServerConfig {
    pub dt: f64,
    pub session_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { dt: DEFAULT_DT, session_capacity: 64 }
    }
}

/// Diagnostics kept outside the simulated state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ServerCounters {
    pub dropped_commands: u64,
    pub dropped_unregisters: u64,
    pub error_replies: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepMetric {
    pub session: u32,
    pub tick: u64,
    pub step_us: f64,
}

/// Passive physics server: owns per-session worlds and nothing else.
#[derive(Debug)]
pub struct PhysicsServer {
    config: ServerConfig,
    sessions: BTreeMap<u32, PhysicsWorld>,
    pub counters: ServerCounters,
    metrics: Vec<StepMetric>,
}

impl PhysicsServer {
    pub fn new(config: ServerConfig) -> Self {
        PhysicsServer { config, sessions: BTreeMap::new(), counters: ServerCounters::default(), metrics: Vec::new() }
    }

    pub fn world(&self, session: u32) -> Option<&PhysicsWorld> {
        self.sessions.get(&session)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Canonical serialization of the full simulated state.
    pub fn state_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.sessions).expect("world state serializes")
    }

    pub fn metrics(&self) -> &[StepMetric] {
        &self.metrics
    }

    pub fn write_metrics_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.metrics {
            w.serialize(m)?;
        }
        w.flush()?;
        Ok(())
    }

    fn session_mut(&mut self, session: u32) -> Result<&mut PhysicsWorld, PhysicsMessage> {
        if !self.sessions.contains_key(&session) && self.sessions.len() >= self.config.session_capacity {
            return Err(PhysicsMessage::Error { session, code: code::CAPACITY, message: format!("session capacity {} reached", self.config.session_capacity) });
        }
        let dt = self.config.dt;
        Ok(self.sessions.entry(session).or_insert_with(|| PhysicsWorld::new(WorldConfig { dt, ..WorldConfig::default() })))
    }

    /// Apply one message; returns the reply, if any.
    pub fn handle(&mut self, msg: PhysicsMessage) -> Option<PhysicsMessage> {
        let session = msg.session();
        let reply = self.handle_inner(msg);
        if matches!(reply, Some(PhysicsMessage::Error { .. })) {
            self.counters.error_replies += 1;
            log::debug!("session {session}: {reply:?}");
        }
        reply
    }

    fn handle_inner(&mut self, msg: PhysicsMessage) -> Option<PhysicsMessage> {
        let session = msg.session();
        match msg {
            PhysicsMessage::Register { desc, pose, .. } => {
                let world = match self.session_mut(session) {
                    Ok(w) => w,
                    Err(e) => return Some(e),
                };
                match world.register(desc, pose) {
                    Ok(()) => None,
                    Err(PhysicsError::DuplicateId(id)) => {
                        Some(PhysicsMessage::Error { session, code: code::DUPLICATE_ID, message: format!("object {id} already registered") })
                    }
                    Err(e) => Some(PhysicsMessage::Error { session, code: code::INVALID_DESCRIPTOR, message: e.to_string() }),
                }
            }
            PhysicsMessage::Unregister { id, .. } => {
                if !self.sessions.get_mut(&session).is_some_and(|w| w.unregister(id)) {
                    self.counters.dropped_unregisters += 1;
                }
                None
            }
            PhysicsMessage::StepConfig { dt, ground, .. } => {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Some(PhysicsMessage::Error { session, code: code::MALFORMED, message: format!("dt must be > 0, got {dt}") });
                }
                match self.session_mut(session) {
                    Ok(w) => {
                        w.config.dt = dt;
                        w.config.ground = ground;
                        None
                    }
                    Err(e) => Some(e),
                }
            }
            PhysicsMessage::Command { commands, .. } => {
                let Some(world) = self.sessions.get_mut(&session) else {
                    self.counters.dropped_commands += commands.len() as u64;
                    return None;
                };
                for c in commands {
                    let ok = match c {
                        Command::Impulse { id, impulse } => world.apply_impulse(id, impulse),
                        Command::KinematicTarget { id, pose } => world.set_kinematic_target(id, pose),
                    };
                    if !ok {
                        self.counters.dropped_commands += 1;
                    }
                }
                None
            }
            PhysicsMessage::Step { steps, .. } => Some(match self.session_mut(session) {
                Ok(_) => self.step_session(session, steps),
                Err(e) => e,
            }),
            PhysicsMessage::Ping { nonce, .. } => Some(PhysicsMessage::Pong { session, nonce }),
            other => Some(PhysicsMessage::Error { session, code: code::MALFORMED, message: format!("server does not accept {other:?}") }),
        }
    }

    /// Advance `session` and report its awake bodies.
    pub fn step_session(&mut self, session: u32, steps: u32) -> PhysicsMessage {
        let world = self.sessions.get_mut(&session).expect("session exists");
        for _ in 0..steps {
            let t0 = Instant::now();
            world.step();
            self.metrics.push(StepMetric { session, tick: world.tick, step_us: t0.elapsed().as_secs_f64() * 1e6 });
        }
        PhysicsMessage::State { session, tick: world.tick, records: world.transforms() }
    }
}

fn serve_connection(stream: TcpStream, server: Arc<Mutex<PhysicsServer>>) -> Result<(), PhysicsError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(msg) = PhysicsMessage::read_from(&mut reader)? {
        let reply = server.lock().expect("server lock").handle(msg);
        if let Some(r) = reply {
            r.write_to(&mut writer)?;
            writer.flush()?;
        }
    }
    Ok(())
}

/// A TCP physics server running on background threads.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub server: Arc<Mutex<PhysicsServer>>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Accept connections until `stop` is set. Each connection gets a thread;
/// sessions are shared, so hosts may reconnect to the same session.
pub fn serve(listener: TcpListener, server: Arc<Mutex<PhysicsServer>>, stop: Arc<AtomicBool>) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false)?;
                let server = server.clone();
                std::thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, server) {
                        log::warn!("connection {peer}: {e}");
                    }
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(2)),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

pub fn spawn_server(addr: &str, config: ServerConfig) -> Result<ServerHandle, PhysicsError> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let server = Arc::new(Mutex::new(PhysicsServer::new(config)));
    let stop = Arc::new(AtomicBool::new(false));
    let (s, st) = (server.clone(), stop.clone());
    let accept = std::thread::spawn(move || {
        if let Err(e) = serve(listener, s, st) {
            log::error!("physics server stopped: {e}");
        }
    });
    Ok(ServerHandle { addr, server, stop, accept: Some(accept) })
}
