//! Session recording (MREC): transform deltas with periodic keyframes plus
//! user-driven events; deterministic replay, seeking and resume.

pub mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geom::{motor_interpolate, Motor};
use crate::net::{PUBLISH_ROTATION_DEG, PUBLISH_TRANSLATION_M};
use crate::scenegraph::Scenegraph;

use format::{chunks, decode_index, encode_index, write_chunk, FRAME_TAG, HEADER_LEN, INDEX_TAG};
pub use format::{Frame, RecordedEvent, RecordingHeader, EVENT_AUDIO_MARKER};

pub const KEYFRAME_INTERVAL_US: u64 = 5_000_000;

#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("integrity error in chunk at offset {offset}: {reason}")]
    Integrity { offset: u64, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("corrupt recording: event {index} of frame at offset {offset} (t={timestamp_us} us): {reason}")]
    CorruptRecording { offset: u64, timestamp_us: u64, index: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Storage form of a motor: the f32 round trip, so change detection sees
/// exactly what a reader will see.
fn quantize(m: &Motor) -> Motor {
    m.to_f32_precision()
}

fn changed(a: &Motor, b: &Motor) -> bool {
    a.differs_from(b, PUBLISH_TRANSLATION_M, PUBLISH_ROTATION_DEG.to_radians())
}

/// Append-only MREC writer.
pub struct Recorder<W: Write> {
    out: W,
    header: RecordingHeader,
    offset: u64,
    keyframe_interval_us: u64,
    last_ts: Option<u64>,
    last_keyframe: Option<u64>,
    written: BTreeMap<u32, Motor>,
    index: Vec<(u64, u64)>,
    frames: usize,
    payload: Vec<u8>,
    chunk: Vec<u8>,
}

impl<W: Write> Recorder<W> {
    pub fn new(mut out: W, header: RecordingHeader) -> Result<Self, RecorderError> {
        out.write_all(&header.encode())?;
        Ok(Recorder {
            out,
            header,
            offset: HEADER_LEN as u64,
            keyframe_interval_us: KEYFRAME_INTERVAL_US,
            last_ts: None,
            last_keyframe: None,
            written: BTreeMap::new(),
            index: Vec::new(),
            frames: 0,
            payload: Vec::new(),
            chunk: Vec::new(),
        })
    }

    /// Start a new file holding `rec` up to `t` and continue appending from there.
    pub fn continue_from(rec: &RecordedSession, t_us: u64, out: W) -> Result<Self, RecorderError> {
        rec.check_time(t_us)?;
        let mut r = Recorder::new(out, rec.header)?;
        for f in rec.frames.iter().take_while(|f| f.timestamp_us <= t_us) {
            r.write_frame(f)?;
        }
        if r.frames > 0 {
            r.last_ts = Some(t_us);
        }
        Ok(r)
    }

    pub fn with_keyframe_interval(mut self, us: u64) -> Self {
        self.keyframe_interval_us = us.max(1);
        self
    }

    pub fn header(&self) -> &RecordingHeader {
        &self.header
    }

    pub fn bytes_written(&self) -> u64 {
        self.offset
    }

    pub fn frames_written(&self) -> usize {
        self.frames
    }

    /// Record the scene at `timestamp_us`. Returns whether a frame was written.
    pub fn record_frame(&mut self, scene: &BTreeMap<u32, Motor>, events: &[RecordedEvent], timestamp_us: u64) -> Result<bool, RecorderError> {
        if let Some(last) = self.last_ts {
            if timestamp_us <= last {
                return Err(RecorderError::Ordering(format!("timestamp {timestamp_us} us is not after {last} us")));
            }
        }
        self.last_ts = Some(timestamp_us);
        let keyframe = self.last_keyframe.is_none_or(|k| timestamp_us - k >= self.keyframe_interval_us);
        let transforms: Vec<(u32, Motor)> =
            scene.iter().map(|(&id, m)| (id, quantize(m))).filter(|(id, q)| keyframe || self.written.get(id).is_none_or(|w| changed(q, w))).collect();
        if !keyframe && transforms.is_empty() && events.is_empty() {
            return Ok(false);
        }
        let frame = Frame { timestamp_us, keyframe, transforms, events: events.to_vec() };
        self.write_frame(&frame)?;
        Ok(true)
    }

    fn write_frame(&mut self, f: &Frame) -> Result<(), RecorderError> {
        self.payload.clear();
        f.encode_payload(&mut self.payload)?;
        self.chunk.clear();
        write_chunk(&mut self.chunk, FRAME_TAG, &self.payload);
        self.out.write_all(&self.chunk)?;
        if f.keyframe {
            self.index.push((f.timestamp_us, self.offset));
            self.last_keyframe = Some(f.timestamp_us);
            self.written.clear();
        }
        self.written.extend(f.transforms.iter().copied());
        self.offset += self.chunk.len() as u64;
        self.last_ts = Some(f.timestamp_us);
        self.frames += 1;
        Ok(())
    }

    /// Write the keyframe index and flush. An empty recording stays header-only.
    pub fn finish(mut self) -> Result<W, RecorderError> {
        if !self.index.is_empty() {
            self.chunk.clear();
            write_chunk(&mut self.chunk, INDEX_TAG, &encode_index(&self.index));
            self.out.write_all(&self.chunk)?;
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

/// A parsed MREC file.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordedSession {
    pub header: RecordingHeader,
    pub frames: Vec<Frame>,
    /// File offset of each frame's chunk.
    pub offsets: Vec<u64>,
    pub index: Option<Vec<(u64, u64)>>,
}

impl RecordedSession {
    pub fn parse(bytes: &[u8]) -> Result<Self, RecorderError> {
        let header = RecordingHeader::decode(bytes)?;
        let mut frames = Vec::new();
        let mut offsets = Vec::new();
        let mut index = None;
        for c in chunks(&bytes[HEADER_LEN..], HEADER_LEN as u64)? {
            let bad = |reason: String| RecorderError::Integrity { offset: c.offset, reason };
            if index.is_some() {
                return Err(bad("chunk after the keyframe index".into()));
            }
            match c.tag {
                FRAME_TAG => {
                    let f = Frame::decode_payload(c.payload).map_err(bad)?;
                    if let Some(prev) = frames.last().map(|p: &Frame| p.timestamp_us) {
                        if f.timestamp_us <= prev {
                            return Err(bad(format!("timestamp {} us does not follow {prev} us", f.timestamp_us)));
                        }
                    }
                    frames.push(f);
                    offsets.push(c.offset);
                }
                INDEX_TAG => {
                    let entries = decode_index(c.payload).map_err(bad)?;
                    let expected: Vec<(u64, u64)> = frames.iter().zip(&offsets).filter(|(f, _)| f.keyframe).map(|(f, &o)| (f.timestamp_us, o)).collect();
                    if entries != expected {
                        return Err(bad("keyframe index does not match the frames".into()));
                    }
                    index = Some(entries);
                }
                tag => log::debug!("skipping unknown chunk {tag:?} at {}", c.offset),
            }
        }
        Ok(RecordedSession { header, frames, offsets, index })
    }

    pub fn load(path: &Path) -> Result<Self, RecorderError> {
        Self::parse(&std::fs::read(path)?)
    }

    /// Re-encode; equals the original bytes for files written by [`Recorder`].
    pub fn to_bytes(&self) -> Result<Vec<u8>, RecorderError> {
        let mut r = Recorder::new(Vec::new(), self.header)?;
        for f in &self.frames {
            r.write_frame(f)?;
        }
        if self.index.is_none() {
            r.index.clear();
        }
        r.finish()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_us(&self) -> u64 {
        self.frames.first().map_or(0, |f| f.timestamp_us)
    }

    pub fn end_us(&self) -> u64 {
        self.frames.last().map_or(0, |f| f.timestamp_us)
    }

    fn check_time(&self, t_us: u64) -> Result<(), RecorderError> {
        if t_us > self.end_us() {
            return Err(RecorderError::Range(format!("t={t_us} us is past the end of the recording ({} us)", self.end_us())));
        }
        Ok(())
    }

    /// Frames with timestamp <= t.
    fn upto(&self, t_us: u64) -> usize {
        self.frames.partition_point(|f| f.timestamp_us <= t_us)
    }

    /// First frame to apply when reconstructing the state after frame `n-1`.
    fn keyframe_before(&self, n: usize) -> usize {
        self.frames[..n].iter().rposition(|f| f.keyframe).unwrap_or(0)
    }

    /// Recorded (held) transforms at `t`: nearest preceding keyframe plus deltas.
    pub fn state_at(&self, t_us: u64) -> Result<BTreeMap<u32, Motor>, RecorderError> {
        self.check_time(t_us)?;
        let n = self.upto(t_us);
        let mut state = BTreeMap::new();
        for f in &self.frames[self.keyframe_before(n)..n] {
            apply(&mut state, f);
        }
        Ok(state)
    }

    /// Stream frames from `from_us` on. When `from_us` falls between frames
    /// the first item is the reconstructed state at `from_us`, with no events.
    pub fn replay<F: FnMut(&ReplayItem)>(&self, from_us: u64, mut sink: F) -> Result<(), RecorderError> {
        let mut state = self.state_at(from_us)?;
        let k = self.upto(from_us);
        if k > 0 {
            let f = &self.frames[k - 1];
            let events = if f.timestamp_us == from_us { f.events.clone() } else { Vec::new() };
            sink(&ReplayItem { timestamp_us: from_us, state: state.clone(), events });
        }
        for f in &self.frames[k..] {
            apply(&mut state, f);
            sink(&ReplayItem { timestamp_us: f.timestamp_us, state: state.clone(), events: f.events.clone() });
        }
        Ok(())
    }

    /// Per-object written samples, for interpolated playback.
    pub fn tracks(&self) -> BTreeMap<u32, Vec<(u64, Motor)>> {
        let mut tracks: BTreeMap<u32, Vec<(u64, Motor)>> = BTreeMap::new();
        for f in &self.frames {
            for &(id, m) in &f.transforms {
                tracks.entry(id).or_default().push((f.timestamp_us, m));
            }
        }
        tracks
    }

    /// Smooth spectator view at `t`: each object blends from its last
    /// written sample toward the next one with `motor_interpolate`.
    pub fn sample(&self, tracks: &BTreeMap<u32, Vec<(u64, Motor)>>, t_us: u64) -> Result<BTreeMap<u32, Motor>, RecorderError> {
        let mut state = self.state_at(t_us)?;
        for (id, m) in state.iter_mut() {
            let Some(track) = tracks.get(id) else { continue };
            let p = track.partition_point(|s| s.0 <= t_us);
            if p == 0 || p == track.len() {
                continue;
            }
            let (t0, t1) = (track[p - 1].0, track[p].0);
            let u = (t_us - t0) as f64 / (t1 - t0) as f64;
            if let Ok(x) = motor_interpolate(m, &track[p].1, u) {
                *m = x;
            }
        }
        Ok(state)
    }

    /// Rebuild a live session at `t`: transforms from the recording and a
    /// scenegraph with every recorded Action event up to `t` re-applied.
    pub fn resume(&self, t_us: u64, mut scenegraph: Scenegraph) -> Result<ResumePoint, RecorderError> {
        let transforms = self.state_at(t_us)?;
        let mut users = BTreeSet::new();
        let mut applied = 0;
        for (f, &offset) in self.frames[..self.upto(t_us)].iter().zip(&self.offsets) {
            for (index, ev) in f.events.iter().enumerate() {
                let corrupt = |reason: String| RecorderError::CorruptRecording { offset, timestamp_us: f.timestamp_us, index, reason };
                match ev {
                    RecordedEvent::Action(a) => {
                        scenegraph.perform_action(a).map_err(|e| corrupt(format!("action '{}': {e}", a.node_id)))?;
                        applied += 1;
                    }
                    RecordedEvent::Undo { node_id } => {
                        scenegraph.undo_action(node_id).map_err(|e| corrupt(format!("undo '{node_id}': {e}")))?;
                        applied += 1;
                    }
                    RecordedEvent::UserJoin(u) => {
                        users.insert(*u);
                    }
                    RecordedEvent::UserLeave(u) => {
                        users.remove(u);
                    }
                    RecordedEvent::Marker(_) | RecordedEvent::Raw { .. } => {}
                }
            }
        }
        Ok(ResumePoint { timestamp_us: t_us, transforms, scenegraph, events_applied: applied, users })
    }
}

fn apply(state: &mut BTreeMap<u32, Motor>, f: &Frame) {
    if f.keyframe {
        state.clear();
    }
    state.extend(f.transforms.iter().copied());
}

/// One element of a replay stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayItem {
    pub timestamp_us: u64,
    pub state: BTreeMap<u32, Motor>,
    pub events: Vec<RecordedEvent>,
}

impl ReplayItem {
    /// Canonical bytes (frame layout, all transforms).
    pub fn encode(&self, out: &mut Vec<u8>) -> Result<(), RecorderError> {
        Frame { timestamp_us: self.timestamp_us, keyframe: true, transforms: self.state.iter().map(|(&i, &m)| (i, m)).collect(), events: self.events.clone() }
            .encode_payload(out)
    }
}

pub struct ResumePoint {
    pub timestamp_us: u64,
    pub transforms: BTreeMap<u32, Motor>,
    pub scenegraph: Scenegraph,
    pub events_applied: usize,
    pub users: BTreeSet<u32>,
}

#[cfg(test)]
mod tests;
