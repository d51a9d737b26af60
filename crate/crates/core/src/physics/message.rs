//! Host/server wire protocol. Little-endian, framed as
//! `length u32 | type u8 | session u32 | payload`, where `length` counts
//! everything after itself.

use std::io::{Read, Write};

use super::world::{Collider, PhysicsDescriptor};
use super::PhysicsError;
use crate::geom::{Motor, Pose, Quat, Vec3};

pub const MAX_MESSAGE_LEN: usize = 16 << 20;

const T_REGISTER: u8 = 1;
const T_UNREGISTER: u8 = 2;
const T_STEP_CONFIG: u8 = 3;
const T_COMMAND: u8 = 4;
const T_STATE: u8 = 5;
const T_PING: u8 = 6;
const T_PONG: u8 = 7;
const T_STEP: u8 = 8;
const T_ERROR: u8 = 9;

/// Error codes carried by `Error` replies.
pub mod code {
    pub const DUPLICATE_ID: u16 = 1;
    pub const INVALID_DESCRIPTOR: u16 = 2;
    pub const CAPACITY: u16 = 3;
    pub const MALFORMED: u16 = 4;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Command {
    Impulse { id: u32, impulse: Vec3 },
    KinematicTarget { id: u32, pose: Pose },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhysicsMessage {
    Register {
        session: u32,
        desc: PhysicsDescriptor,
        pose: Pose,
    },
    Unregister {
        session: u32,
        id: u32,
    },
    StepConfig {
        session: u32,
        dt: f64,
        ground: bool,
    },
    Command {
        session: u32,
        commands: Vec<Command>,
    },
    /// Advance the session `steps` times; answered with one `State`.
    Step {
        session: u32,
        steps: u32,
    },
    State {
        session: u32,
        tick: u64,
        records: Vec<(u32, Motor)>,
    },
    Ping {
        session: u32,
        nonce: u64,
    },
    Pong {
        session: u32,
        nonce: u64,
    },
    Error {
        session: u32,
        code: u16,
        message: String,
    },
}

struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec3(&mut self, v: Vec3) {
        self.f64(v.x);
        self.f64(v.y);
        self.f64(v.z);
    }
    fn pose(&mut self, p: &Pose) {
        self.vec3(p.position);
        for c in p.orientation.to_array() {
            self.f64(c);
        }
    }
}

struct R<'a> {
    b: &'a [u8],
    off: usize,
}

impl R<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PhysicsError> {
        if self.b.len() - self.off < n {
            return Err(PhysicsError::Malformed(format!("message truncated at byte {}", self.off)));
        }
        let s = &self.b[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, PhysicsError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, PhysicsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2")))
    }
    fn u32(&mut self) -> Result<u32, PhysicsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }
    fn u64(&mut self) -> Result<u64, PhysicsError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    fn f64(&mut self) -> Result<f64, PhysicsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    fn vec3(&mut self) -> Result<Vec3, PhysicsError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn pose(&mut self) -> Result<Pose, PhysicsError> {
        let p = self.vec3()?;
        let q = Quat::new(self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        Ok(Pose::new(p, q))
    }
}

impl PhysicsMessage {
    pub fn session(&self) -> u32 {
        match self {
            PhysicsMessage::Register { session, .. }
            | PhysicsMessage::Unregister { session, .. }
            | PhysicsMessage::StepConfig { session, .. }
            | PhysicsMessage::Command { session, .. }
            | PhysicsMessage::Step { session, .. }
            | PhysicsMessage::State { session, .. }
            | PhysicsMessage::Ping { session, .. }
            | PhysicsMessage::Pong { session, .. }
            | PhysicsMessage::Error { session, .. } => *session,
        }
    }

    /// Full frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = W(vec![0; 4]);
        let ty = match self {
            PhysicsMessage::Register { .. } => T_REGISTER,
            PhysicsMessage::Unregister { .. } => T_UNREGISTER,
            PhysicsMessage::StepConfig { .. } => T_STEP_CONFIG,
            PhysicsMessage::Command { .. } => T_COMMAND,
            PhysicsMessage::Step { .. } => T_STEP,
            PhysicsMessage::State { .. } => T_STATE,
            PhysicsMessage::Ping { .. } => T_PING,
            PhysicsMessage::Pong { .. } => T_PONG,
            PhysicsMessage::Error { .. } => T_ERROR,
        };
        w.u8(ty);
        w.u32(self.session());
        match self {
            PhysicsMessage::Register { desc, pose, .. } => {
                w.u32(desc.id);
                match desc.collider {
                    Collider::Sphere { radius } => {
                        w.u8(1);
                        w.vec3(Vec3::new(radius, 0.0, 0.0));
                    }
                    Collider::Box { half_extents } => {
                        w.u8(2);
                        w.vec3(half_extents);
                    }
                    Collider::Capsule { radius, half_length } => {
                        w.u8(3);
                        w.vec3(Vec3::new(radius, half_length, 0.0));
                    }
                }
                w.f64(desc.mass);
                w.f64(desc.friction);
                w.f64(desc.restitution);
                w.u8(desc.kinematic as u8);
                w.pose(pose);
            }
            PhysicsMessage::Unregister { id, .. } => w.u32(*id),
            PhysicsMessage::StepConfig { dt, ground, .. } => {
                w.f64(*dt);
                w.u8(*ground as u8);
            }
            PhysicsMessage::Command { commands, .. } => {
                w.u32(commands.len() as u32);
                for c in commands {
                    match c {
                        Command::Impulse { id, impulse } => {
                            w.u8(1);
                            w.u32(*id);
                            w.vec3(*impulse);
                        }
                        Command::KinematicTarget { id, pose } => {
                            w.u8(2);
                            w.u32(*id);
                            w.pose(pose);
                        }
                    }
                }
            }
            PhysicsMessage::Step { steps, .. } => w.u32(*steps),
            PhysicsMessage::State { tick, records, .. } => {
                w.u64(*tick);
                w.u32(records.len() as u32);
                for (id, m) in records {
                    w.u32(*id);
                    for c in m.to_array() {
                        w.f64(c);
                    }
                }
            }
            PhysicsMessage::Ping { nonce, .. } | PhysicsMessage::Pong { nonce, .. } => w.u64(*nonce),
            PhysicsMessage::Error { code, message, .. } => {
                let m = &message.as_bytes()[..message.len().min(u16::MAX as usize)];
                w.u16(*code);
                w.u16(m.len() as u16);
                w.0.extend_from_slice(m);
            }
        }
        let len = (w.0.len() - 4) as u32;
        w.0[0..4].copy_from_slice(&len.to_le_bytes());
        w.0
    }

    /// Decode one message body (the bytes after the length prefix).
    pub fn decode_body(b: &[u8]) -> Result<Self, PhysicsError> {
        let mut r = R { b, off: 0 };
        let ty = r.u8()?;
        let session = r.u32()?;
        let msg = match ty {
            T_REGISTER => {
                let id = r.u32()?;
                let kind = r.u8()?;
                let p = r.vec3()?;
                let collider = match kind {
                    1 => Collider::Sphere { radius: p.x },
                    2 => Collider::Box { half_extents: p },
                    3 => Collider::Capsule { radius: p.x, half_length: p.y },
                    k => return Err(PhysicsError::Malformed(format!("unknown collider kind {k}"))),
                };
                let desc = PhysicsDescriptor { id, collider, mass: r.f64()?, friction: r.f64()?, restitution: r.f64()?, kinematic: r.u8()? != 0 };
                PhysicsMessage::Register { session, desc, pose: r.pose()? }
            }
            T_UNREGISTER => PhysicsMessage::Unregister { session, id: r.u32()? },
            T_STEP_CONFIG => PhysicsMessage::StepConfig { session, dt: r.f64()?, ground: r.u8()? != 0 },
            T_COMMAND => {
                let n = r.u32()? as usize;
                let mut commands = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    let kind = r.u8()?;
                    let id = r.u32()?;
                    commands.push(match kind {
                        1 => Command::Impulse { id, impulse: r.vec3()? },
                        2 => Command::KinematicTarget { id, pose: r.pose()? },
                        k => return Err(PhysicsError::Malformed(format!("unknown command kind {k}"))),
                    });
                }
                PhysicsMessage::Command { session, commands }
            }
            T_STEP => PhysicsMessage::Step { session, steps: r.u32()? },
            T_STATE => {
                let tick = r.u64()?;
                let n = r.u32()? as usize;
                let mut records = Vec::with_capacity(n.min(4096));
                for _ in 0..n {
                    let id = r.u32()?;
                    let mut a = [0.0; 8];
                    for c in &mut a {
                        *c = r.f64()?;
                    }
                    records.push((id, Motor::from_array(a)));
                }
                PhysicsMessage::State { session, tick, records }
            }
            T_PING => PhysicsMessage::Ping { session, nonce: r.u64()? },
            T_PONG => PhysicsMessage::Pong { session, nonce: r.u64()? },
            T_ERROR => {
                let code = r.u16()?;
                let len = r.u16()? as usize;
                let message = String::from_utf8_lossy(r.take(len)?).into_owned();
                PhysicsMessage::Error { session, code, message }
            }
            t => return Err(PhysicsError::Malformed(format!("unknown message type {t}"))),
        };
        if r.off != b.len() {
            return Err(PhysicsError::Malformed(format!("{} trailing bytes", b.len() - r.off)));
        }
        Ok(msg)
    }

    pub fn decode(frame: &[u8]) -> Result<Self, PhysicsError> {
        if frame.len() < 4 {
            return Err(PhysicsError::Malformed("frame shorter than its length prefix".into()));
        }
        let len = u32::from_le_bytes(frame[0..4].try_into().expect("4")) as usize;
        if frame.len() - 4 != len {
            return Err(PhysicsError::Malformed(format!("length prefix {len} but {} bytes follow", frame.len() - 4)));
        }
        Self::decode_body(&frame[4..])
    }

    pub fn write_to<Wr: Write>(&self, w: &mut Wr) -> Result<(), PhysicsError> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    /// Read one framed message; `Ok(None)` on a clean end of stream.
    pub fn read_from<Rd: Read>(r: &mut Rd) -> Result<Option<Self>, PhysicsError> {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_le_bytes(len) as usize;
        if len > MAX_MESSAGE_LEN {
            return Err(PhysicsError::Malformed(format!("message length {len} exceeds {MAX_MESSAGE_LEN}")));
        }
        let mut body = vec![0u8; len];
        r.read_exact(&mut body)?;
        Self::decode_body(&body).map(Some)
    }
}
