//! MREC byte layout. Everything is little-endian.
//!
//! ```text
//! header  "MREC" | version u16 | session id [16] | tick rate u32 | user count u16
//! chunk   tag [4] | length u32 | payload [length] | crc32 u32 (over tag, length, payload)
//! FRAM    timestamp u64 | flags u8 | transform count u32 | event count u16
//!         | (object id u32 | motor 8×f32)* | (type u16 | length u16 | payload)*
//! KIDX    count u32 | (timestamp u64 | chunk offset u64)*
//! ```

use crate::geom::Motor;
use crate::net::codec::{read_motor_f32, write_motor_f32, MOTOR_PAYLOAD_LEN};
use crate::scenegraph::ActionEvent;

use super::RecorderError;

pub const MAGIC: [u8; 4] = *b"MREC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;
pub const CHUNK_OVERHEAD: usize = 12;
pub const FRAME_TAG: [u8; 4] = *b"FRAM";
pub const INDEX_TAG: [u8; 4] = *b"KIDX";
pub const TRANSFORM_RECORD_LEN: usize = 4 + MOTOR_PAYLOAD_LEN;
const FRAME_FIXED_LEN: usize = 8 + 1 + 4 + 2;
const FLAG_KEYFRAME: u8 = 1;

pub const EVENT_ACTION: u16 = 1;
pub const EVENT_UNDO: u16 = 2;
pub const EVENT_USER_JOIN: u16 = 3;
pub const EVENT_USER_LEAVE: u16 = 4;
pub const EVENT_MARKER: u16 = 5;
/// Reserved for timestamped voice/audio markers; never produced.
pub const EVENT_AUDIO_MARKER: u16 = 0x0100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordingHeader {
    pub version: u16,
    pub session_id: [u8; 16],
    pub tick_rate_hz: u32,
    pub user_count: u16,
}

impl RecordingHeader {
    pub fn new(session_id: [u8; 16], tick_rate_hz: u32, user_count: u16) -> Self {
        RecordingHeader { version: VERSION, session_id, tick_rate_hz, user_count }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..22].copy_from_slice(&self.session_id);
        b[22..26].copy_from_slice(&self.tick_rate_hz.to_le_bytes());
        b[26..28].copy_from_slice(&self.user_count.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, RecorderError> {
        if b.len() < HEADER_LEN {
            return Err(RecorderError::Format(format!("file is {} bytes, header needs {HEADER_LEN}", b.len())));
        }
        if b[0..4] != MAGIC {
            return Err(RecorderError::Format(format!("bad magic {:?}", &b[0..4])));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(RecorderError::Format(format!("unsupported version {version}")));
        }
        let mut session_id = [0u8; 16];
        session_id.copy_from_slice(&b[6..22]);
        Ok(RecordingHeader {
            version,
            session_id,
            tick_rate_hz: u32::from_le_bytes([b[22], b[23], b[24], b[25]]),
            user_count: u16::from_le_bytes([b[26], b[27]]),
        })
    }
}

/// A user-driven event stored in a frame.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordedEvent {
    Action(ActionEvent),
    Undo {
        node_id: String,
    },
    UserJoin(u32),
    UserLeave(u32),
    Marker(String),
    /// Any other type code, kept verbatim.
    Raw {
        code: u16,
        payload: Vec<u8>,
    },
}

impl RecordedEvent {
    pub fn code(&self) -> u16 {
        match self {
            RecordedEvent::Action(_) => EVENT_ACTION,
            RecordedEvent::Undo { .. } => EVENT_UNDO,
            RecordedEvent::UserJoin(_) => EVENT_USER_JOIN,
            RecordedEvent::UserLeave(_) => EVENT_USER_LEAVE,
            RecordedEvent::Marker(_) => EVENT_MARKER,
            RecordedEvent::Raw { code, .. } => *code,
        }
    }

    fn payload(&self) -> Result<Vec<u8>, RecorderError> {
        Ok(match self {
            RecordedEvent::Action(ev) => serde_json::to_vec(ev).map_err(|e| RecorderError::InvalidEvent(e.to_string()))?,
            RecordedEvent::Undo { node_id } => node_id.as_bytes().to_vec(),
            RecordedEvent::UserJoin(u) | RecordedEvent::UserLeave(u) => u.to_le_bytes().to_vec(),
            RecordedEvent::Marker(s) => s.as_bytes().to_vec(),
            RecordedEvent::Raw { payload, .. } => payload.clone(),
        })
    }

    fn decode(code: u16, p: &[u8]) -> Result<Self, String> {
        let text = |p: &[u8]| String::from_utf8(p.to_vec()).map_err(|e| e.to_string());
        let user = |p: &[u8]| -> Result<u32, String> { p.try_into().map(u32::from_le_bytes).map_err(|_| format!("user event payload is {} bytes", p.len())) };
        Ok(match code {
            EVENT_ACTION => RecordedEvent::Action(serde_json::from_slice(p).map_err(|e| e.to_string())?),
            EVENT_UNDO => RecordedEvent::Undo { node_id: text(p)? },
            EVENT_USER_JOIN => RecordedEvent::UserJoin(user(p)?),
            EVENT_USER_LEAVE => RecordedEvent::UserLeave(user(p)?),
            EVENT_MARKER => RecordedEvent::Marker(text(p)?),
            code => RecordedEvent::Raw { code, payload: p.to_vec() },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub timestamp_us: u64,
    pub keyframe: bool,
    /// Sorted by object id.
    pub transforms: Vec<(u32, Motor)>,
    pub events: Vec<RecordedEvent>,
}

impl Frame {
    /// Frame payload (without chunk framing).
    pub fn encode_payload(&self, out: &mut Vec<u8>) -> Result<(), RecorderError> {
        let n_ev = u16::try_from(self.events.len()).map_err(|_| RecorderError::InvalidEvent(format!("{} events in one frame", self.events.len())))?;
        let n_tr = u32::try_from(self.transforms.len()).map_err(|_| RecorderError::InvalidEvent("too many transforms".into()))?;
        out.reserve(FRAME_FIXED_LEN + self.transforms.len() * TRANSFORM_RECORD_LEN);
        out.extend_from_slice(&self.timestamp_us.to_le_bytes());
        out.push(if self.keyframe { FLAG_KEYFRAME } else { 0 });
        out.extend_from_slice(&n_tr.to_le_bytes());
        out.extend_from_slice(&n_ev.to_le_bytes());
        for (id, m) in &self.transforms {
            out.extend_from_slice(&id.to_le_bytes());
            write_motor_f32(out, m);
        }
        for ev in &self.events {
            let p = ev.payload()?;
            let len = u16::try_from(p.len()).map_err(|_| RecorderError::InvalidEvent(format!("event payload of {} bytes exceeds 65535", p.len())))?;
            out.extend_from_slice(&ev.code().to_le_bytes());
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(&p);
        }
        Ok(())
    }

    pub fn decode_payload(p: &[u8]) -> Result<Frame, String> {
        if p.len() < FRAME_FIXED_LEN {
            return Err(format!("frame payload is {} bytes", p.len()));
        }
        let timestamp_us = u64::from_le_bytes(p[0..8].try_into().expect("8 bytes"));
        let flags = p[8];
        if flags & !FLAG_KEYFRAME != 0 {
            return Err(format!("unknown frame flags {flags:#04x}"));
        }
        let n_tr = u32::from_le_bytes(p[9..13].try_into().expect("4 bytes")) as usize;
        let n_ev = u16::from_le_bytes([p[13], p[14]]) as usize;
        let mut off = FRAME_FIXED_LEN;
        let need = n_tr.checked_mul(TRANSFORM_RECORD_LEN).and_then(|n| n.checked_add(off)).ok_or("transform count overflows")?;
        if need > p.len() {
            return Err(format!("{n_tr} transforms do not fit in {} bytes", p.len()));
        }
        let mut transforms = Vec::with_capacity(n_tr);
        for _ in 0..n_tr {
            let id = u32::from_le_bytes(p[off..off + 4].try_into().expect("4 bytes"));
            transforms.push((id, read_motor_f32(&p[off + 4..off + TRANSFORM_RECORD_LEN])));
            off += TRANSFORM_RECORD_LEN;
        }
        let mut events = Vec::with_capacity(n_ev);
        for k in 0..n_ev {
            if off + 4 > p.len() {
                return Err(format!("event {k} header truncated"));
            }
            let code = u16::from_le_bytes([p[off], p[off + 1]]);
            let len = u16::from_le_bytes([p[off + 2], p[off + 3]]) as usize;
            off += 4;
            if off + len > p.len() {
                return Err(format!("event {k} payload truncated"));
            }
            events.push(RecordedEvent::decode(code, &p[off..off + len]).map_err(|e| format!("event {k}: {e}"))?);
            off += len;
        }
        if off != p.len() {
            return Err(format!("{} trailing bytes", p.len() - off));
        }
        Ok(Frame { timestamp_us, keyframe: flags & FLAG_KEYFRAME != 0, transforms, events })
    }
}

/// Append one chunk.
pub fn write_chunk(out: &mut Vec<u8>, tag: [u8; 4], payload: &[u8]) {
    let len = u32::try_from(payload.len()).expect("chunk below 4 GiB");
    let start = out.len();
    out.extend_from_slice(&tag);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

pub struct Chunk<'a> {
    pub offset: u64,
    pub tag: [u8; 4],
    pub payload: &'a [u8],
}

/// Split `b` (everything after the header) into verified chunks.
/// `base` is the file offset of `b[0]`.
pub fn chunks(b: &[u8], base: u64) -> Result<Vec<Chunk<'_>>, RecorderError> {
    let mut out = Vec::new();
    let mut off = 0usize;
    while off < b.len() {
        let at = base + off as u64;
        let bad = |reason: String| RecorderError::Integrity { offset: at, reason };
        if b.len() - off < CHUNK_OVERHEAD {
            return Err(bad(format!("truncated chunk header ({} bytes left)", b.len() - off)));
        }
        let tag: [u8; 4] = b[off..off + 4].try_into().expect("4 bytes");
        let len = u32::from_le_bytes(b[off + 4..off + 8].try_into().expect("4 bytes")) as usize;
        if len > b.len() - off - CHUNK_OVERHEAD {
            return Err(bad(format!("chunk length {len} runs past end of file")));
        }
        let body_end = off + 8 + len;
        let stored = u32::from_le_bytes(b[body_end..body_end + 4].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(&b[off..body_end]);
        if stored != actual {
            return Err(bad(format!("crc mismatch (stored {stored:08x}, computed {actual:08x})")));
        }
        out.push(Chunk { offset: at, tag, payload: &b[off + 8..body_end] });
        off = body_end + 4;
    }
    Ok(out)
}

pub fn encode_index(entries: &[(u64, u64)]) -> Vec<u8> {
    let mut p = Vec::with_capacity(4 + entries.len() * 16);
    p.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (t, o) in entries {
        p.extend_from_slice(&t.to_le_bytes());
        p.extend_from_slice(&o.to_le_bytes());
    }
    p
}

pub fn decode_index(p: &[u8]) -> Result<Vec<(u64, u64)>, String> {
    if p.len() < 4 {
        return Err("index chunk too short".into());
    }
    let n = u32::from_le_bytes(p[0..4].try_into().expect("4 bytes")) as usize;
    if p.len() != 4 + n * 16 {
        return Err(format!("index declares {n} entries but has {} bytes", p.len()));
    }
    Ok((0..n)
        .map(|k| {
            let o = 4 + k * 16;
            (u64::from_le_bytes(p[o..o + 8].try_into().expect("8 bytes")), u64::from_le_bytes(p[o + 8..o + 16].try_into().expect("8 bytes")))
        })
        .collect())
}
