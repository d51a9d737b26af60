//! Binary transform-update packets.
//!
//! Layout (little-endian):
//!
//! ```text
//! 0   2  magic "NS"
//! 2   1  version / payload format (1 = f32 motor, 2 = 16-bit quantized motor, 3 = 3x4 matrix baseline)
//! 3   1  kind (0 update, 1 event, 2 join, 3 leave)
//! 4   4  session id
//! 8   4  sender id
//! 12  4  tick
//! 16  2  record count
//! 18  .. records: u32 object id + payload
//! ```
//!
//! A full-precision motor record is 4 + 8·4 = 36 bytes. The matrix baseline
//! spends 12·4 = 48 bytes on the same transform.

use thiserror::Error;

use crate::geom::Motor;

pub const MAGIC: [u8; 2] = *b"NS";
pub const HEADER_LEN: usize = 18;
pub const OBJECT_ID_LEN: usize = 4;
pub const MOTOR_PAYLOAD_LEN: usize = 32;
pub const MATRIX_PAYLOAD_LEN: usize = 48;
pub const Q16_PAYLOAD_LEN: usize = 16;
pub const RECORD_LEN: usize = OBJECT_ID_LEN + MOTOR_PAYLOAD_LEN;
pub const MAX_RECORDS: usize = u16::MAX as usize;

/// Quantization step for dual-part coefficients (2^-10); covers |t| < 64 m.
const Q16_DUAL_STEP: f64 = 1.0 / 1024.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("packet too large: {0} records (max {MAX_RECORDS})")]
    PacketTooLarge(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("framing error: expected {expected} bytes, got {actual}")]
    Framing { expected: usize, actual: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PacketKind {
    Update = 0,
    Event = 1,
    Join = 2,
    Leave = 3,
}

impl PacketKind {
    fn from_byte(b: u8) -> Result<Self, CodecError> {
        Ok(match b {
            0 => PacketKind::Update,
            1 => PacketKind::Event,
            2 => PacketKind::Join,
            3 => PacketKind::Leave,
            other => return Err(CodecError::Protocol(format!("unknown packet kind {other}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[repr(u8)]
pub enum PayloadFormat {
    #[default]
    Motor = 1,
    MotorQ16 = 2,
    Matrix = 3,
}

impl PayloadFormat {
    fn from_byte(b: u8) -> Result<Self, CodecError> {
        Ok(match b {
            1 => PayloadFormat::Motor,
            2 => PayloadFormat::MotorQ16,
            3 => PayloadFormat::Matrix,
            other => return Err(CodecError::Protocol(format!("unsupported version {other}"))),
        })
    }

    pub fn payload_len(self) -> usize {
        match self {
            PayloadFormat::Motor => MOTOR_PAYLOAD_LEN,
            PayloadFormat::MotorQ16 => Q16_PAYLOAD_LEN,
            PayloadFormat::Matrix => MATRIX_PAYLOAD_LEN,
        }
    }

    pub fn record_len(self) -> usize {
        OBJECT_ID_LEN + self.payload_len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateRecord {
    pub object_id: u32,
    pub motor: Motor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdatePacket {
    pub format: PayloadFormat,
    pub kind: PacketKind,
    pub session_id: u32,
    pub sender_id: u32,
    pub tick: u32,
    pub records: Vec<UpdateRecord>,
}

impl UpdatePacket {
    pub fn update(session_id: u32, sender_id: u32, tick: u32, records: Vec<UpdateRecord>) -> Self {
        UpdatePacket { format: PayloadFormat::Motor, kind: PacketKind::Update, session_id, sender_id, tick, records }
    }

    pub fn control(kind: PacketKind, session_id: u32, sender_id: u32, tick: u32) -> Self {
        UpdatePacket { format: PayloadFormat::Motor, kind, session_id, sender_id, tick, records: Vec::new() }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.format.record_len() * self.records.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), CodecError> {
        if self.records.len() > MAX_RECORDS {
            return Err(CodecError::PacketTooLarge(self.records.len()));
        }
        out.extend_from_slice(&MAGIC);
        out.push(self.format as u8);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.session_id.to_le_bytes());
        out.extend_from_slice(&self.sender_id.to_le_bytes());
        out.extend_from_slice(&self.tick.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u16).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.object_id.to_le_bytes());
            match self.format {
                PayloadFormat::Motor => write_motor_f32(out, &r.motor),
                PayloadFormat::MotorQ16 => write_motor_q16(out, &r.motor),
                PayloadFormat::Matrix => write_matrix_f32(out, &r.motor),
            }
        }
        Ok(())
    }

    /// Decode a complete packet. Nothing is returned on error.
    pub fn decode(bytes: &[u8]) -> Result<UpdatePacket, CodecError> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 2 && bytes[..2] != MAGIC {
                return Err(CodecError::Protocol("bad magic".into()));
            }
            return Err(CodecError::Framing { expected: HEADER_LEN, actual: bytes.len() });
        }
        if bytes[..2] != MAGIC {
            return Err(CodecError::Protocol("bad magic".into()));
        }
        let format = PayloadFormat::from_byte(bytes[2])?;
        let kind = PacketKind::from_byte(bytes[3])?;
        let session_id = read_u32(bytes, 4);
        let sender_id = read_u32(bytes, 8);
        let tick = read_u32(bytes, 12);
        let count = u16::from_le_bytes([bytes[16], bytes[17]]) as usize;
        let expected = HEADER_LEN + count * format.record_len();
        if bytes.len() != expected {
            return Err(CodecError::Framing { expected, actual: bytes.len() });
        }
        let mut records = Vec::with_capacity(count);
        let mut off = HEADER_LEN;
        for _ in 0..count {
            let object_id = read_u32(bytes, off);
            off += OBJECT_ID_LEN;
            let payload = &bytes[off..off + format.payload_len()];
            let motor = match format {
                PayloadFormat::Motor => read_motor_f32(payload),
                PayloadFormat::MotorQ16 => read_motor_q16(payload),
                PayloadFormat::Matrix => read_matrix_f32(payload),
            };
            off += format.payload_len();
            records.push(UpdateRecord { object_id, motor });
        }
        Ok(UpdatePacket { format, kind, session_id, sender_id, tick, records })
    }
}

#[inline]
fn read_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

#[inline]
fn read_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

pub(crate) fn write_motor_f32(out: &mut Vec<u8>, m: &Motor) {
    for c in m.to_f32_array() {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

pub(crate) fn read_motor_f32(b: &[u8]) -> Motor {
    let mut a = [0f32; 8];
    for (i, c) in a.iter_mut().enumerate() {
        *c = read_f32(b, i * 4);
    }
    Motor::from_f32_array(a)
}

fn write_motor_q16(out: &mut Vec<u8>, m: &Motor) {
    let a = m.to_array();
    for (i, c) in a.iter().enumerate() {
        let q = if i < 4 { c * i16::MAX as f64 } else { c / Q16_DUAL_STEP };
        let q = q.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
}

fn read_motor_q16(b: &[u8]) -> Motor {
    let mut a = [0f64; 8];
    for (i, c) in a.iter_mut().enumerate() {
        let q = i16::from_le_bytes([b[i * 2], b[i * 2 + 1]]) as f64;
        *c = if i < 4 { q / i16::MAX as f64 } else { q * Q16_DUAL_STEP };
    }
    Motor::from_array(a)
}

fn write_matrix_f32(out: &mut Vec<u8>, m: &Motor) {
    for row in m.to_affine_3x4() {
        for c in row {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
}

fn read_matrix_f32(b: &[u8]) -> Motor {
    let mut m = [[0f64; 4]; 3];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = read_f32(b, (r * 4 + c) * 4) as f64;
        }
    }
    Motor::from_affine_3x4(&m)
}

/// Encode an update packet in the default (full-precision motor) format.
pub fn encode_update(session_id: u32, sender_id: u32, tick: u32, records: &[(u32, Motor)]) -> Result<Vec<u8>, CodecError> {
    let records = records.iter().map(|&(object_id, motor)| UpdateRecord { object_id, motor }).collect();
    UpdatePacket::update(session_id, sender_id, tick, records).encode()
}

/// Encode the same records with the 3×4 affine-matrix baseline payload.
pub fn encode_update_matrix(session_id: u32, sender_id: u32, tick: u32, records: &[(u32, Motor)]) -> Result<Vec<u8>, CodecError> {
    let records = records.iter().map(|&(object_id, motor)| UpdateRecord { object_id, motor }).collect();
    UpdatePacket { format: PayloadFormat::Matrix, ..UpdatePacket::update(session_id, sender_id, tick, records) }.encode()
}

pub fn decode_update(bytes: &[u8]) -> Result<UpdatePacket, CodecError> {
    UpdatePacket::decode(bytes)
}

/// Fractional reduction of the per-object transform payload, motor vs matrix.
pub fn payload_reduction() -> f64 {
    1.0 - MOTOR_PAYLOAD_LEN as f64 / MATRIX_PAYLOAD_LEN as f64
}
