use std::collections::{BTreeMap, VecDeque};
use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::message::{Command, PhysicsMessage};
use super::server::{PhysicsServer, ServerConfig};
use super::world::PhysicsDescriptor;
use super::PhysicsError;
use crate::geom::{Motor, Pose};

/// Ordered message channel between a host and a server.
pub trait Transport {
    fn send(&mut self, msg: &PhysicsMessage) -> Result<(), PhysicsError>;
    fn recv(&mut self) -> Result<PhysicsMessage, PhysicsError>;
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, PhysicsError> {
        let unreachable = |e: std::io::Error| PhysicsError::Unreachable(format!("{addr}: {e}"));
        let sock = addr.to_socket_addrs().map_err(unreachable)?.next().ok_or_else(|| PhysicsError::Unreachable(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout).map_err(unreachable)?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &PhysicsMessage) -> Result<(), PhysicsError> {
        msg.write_to(&mut self.writer)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<PhysicsMessage, PhysicsError> {
        PhysicsMessage::read_from(&mut self.reader)?.ok_or_else(|| PhysicsError::Unreachable("server closed the connection".into()))
    }
}

/// A server living in the same process, still reached through encoded bytes.
pub struct LocalTransport {
    pub server: PhysicsServer,
    inbox: VecDeque<Vec<u8>>,
}

impl LocalTransport {
    pub fn new(config: ServerConfig) -> Self {
        LocalTransport { server: PhysicsServer::new(config), inbox: VecDeque::new() }
    }
}

impl Transport for LocalTransport {
    fn send(&mut self, msg: &PhysicsMessage) -> Result<(), PhysicsError> {
        let msg = PhysicsMessage::decode(&msg.encode())?;
        if let Some(reply) = self.server.handle(msg) {
            self.inbox.push_back(reply.encode());
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<PhysicsMessage, PhysicsError> {
        let bytes = self.inbox.pop_front().ok_or_else(|| PhysicsError::Malformed("no reply pending".into()))?;
        PhysicsMessage::decode(&bytes)
    }
}

/// Set host motors from a STATE message. Unknown ids are skipped.
pub fn host_sync(scene: &mut BTreeMap<u32, Motor>, records: &[(u32, Motor)]) -> usize {
    let mut n = 0;
    for (id, m) in records {
        match scene.get_mut(id) {
            Some(slot) => {
                *slot = *m;
                n += 1;
            }
            None => log::warn!("state for unknown object {id} skipped"),
        }
    }
    n
}

/// Game-logic side: graphics objects whose transforms come from the server.
pub struct Host<T: Transport> {
    pub session: u32,
    pub transport: T,
    pub scene: BTreeMap<u32, Motor>,
    pub tick: u64,
    /// Wall time of each step round trip, microseconds.
    pub round_trips_us: Vec<f64>,
}

impl<T: Transport> Host<T> {
    pub fn new(session: u32, transport: T) -> Self {
        Host { session, transport, scene: BTreeMap::new(), tick: 0, round_trips_us: Vec::new() }
    }

    pub fn configure(&mut self, dt: f64, ground: bool) -> Result<(), PhysicsError> {
        self.transport.send(&PhysicsMessage::StepConfig { session: self.session, dt, ground })
    }

    pub fn register(&mut self, desc: PhysicsDescriptor, pose: Pose) -> Result<(), PhysicsError> {
        self.transport.send(&PhysicsMessage::Register { session: self.session, desc, pose })?;
        self.scene.insert(desc.id, Motor::from_pose(&pose).map_err(|e| PhysicsError::InvalidDescriptor(e.to_string()))?);
        Ok(())
    }

    pub fn unregister(&mut self, id: u32) -> Result<(), PhysicsError> {
        self.scene.remove(&id);
        self.transport.send(&PhysicsMessage::Unregister { session: self.session, id })
    }

    pub fn command(&mut self, commands: Vec<Command>) -> Result<(), PhysicsError> {
        self.transport.send(&PhysicsMessage::Command { session: self.session, commands })
    }

    /// One server step; applies the returned STATE to the host scene.
    pub fn step(&mut self) -> Result<usize, PhysicsError> {
        let t0 = Instant::now();
        self.transport.send(&PhysicsMessage::Step { session: self.session, steps: 1 })?;
        loop {
            match self.transport.recv()? {
                PhysicsMessage::State { tick, records, .. } => {
                    self.round_trips_us.push(t0.elapsed().as_secs_f64() * 1e6);
                    self.tick = tick;
                    return Ok(host_sync(&mut self.scene, &records));
                }
                PhysicsMessage::Error { code, message, .. } => return Err(PhysicsError::Remote { code, message }),
                other => log::debug!("ignoring {other:?}"),
            }
        }
    }

    pub fn ping(&mut self, nonce: u64) -> Result<u64, PhysicsError> {
        self.transport.send(&PhysicsMessage::Ping { session: self.session, nonce })?;
        loop {
            match self.transport.recv()? {
                PhysicsMessage::Pong { nonce, .. } => return Ok(nonce),
                PhysicsMessage::Error { code, message, .. } => return Err(PhysicsError::Remote { code, message }),
                other => log::debug!("ignoring {other:?}"),
            }
        }
    }
}
