//! C ABI for the simulation engine.
//!
//! Every fallible function returns a [`MedsimStatus`]; on failure the
//! message is kept per thread and read with [`medsim_last_error`].
//! Objects are opaque handles released with their `_free` function.
//! Strings and byte buffers handed out by the library are released with
//! [`medsim_string_free`] and [`medsim_bytes_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use medsim::analytics::TotalMode;
use medsim::geom::{motor_interpolate, Motor, Pose, Quat, Vec3};
use medsim::net::{decode_update, encode_update, CodecError};
use medsim::physics::{Collider, PhysicsDescriptor, PhysicsError, PhysicsWorld, WorldConfig};
use medsim::recorder::{RecordedEvent, RecordedSession, Recorder, RecorderError, RecordingHeader};
use medsim::scenegraph::{ActionEvent, SceneError, Scenegraph};
use medsim::sim::{self, RunConfig, SimError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MedsimStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Cycle = 4,
    Ordering = 5,
    Dependency = 6,
    Codec = 7,
    Recorder = 8,
    Physics = 9,
    Unreachable = 10,
    Io = 11,
    InvalidArgument = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MedsimShape {
    Sphere = 1,
    Box = 2,
    Capsule = 3,
}

pub struct MedsimScenegraph {
    graph: Scenegraph,
}

pub struct MedsimRecorder {
    rec: Recorder<Vec<u8>>,
}

pub struct MedsimRecording {
    rec: RecordedSession,
}

pub struct MedsimPhysicsWorld {
    world: PhysicsWorld,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MedsimStatus, String);

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        let s = match e {
            SceneError::Schema(_) => MedsimStatus::Schema,
            SceneError::Cycle(_) => MedsimStatus::Cycle,
            SceneError::Ordering(_) => MedsimStatus::Ordering,
            SceneError::Dependency(_) => MedsimStatus::Dependency,
        };
        Failure(s, e.to_string())
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        Failure(MedsimStatus::Codec, e.to_string())
    }
}

impl From<RecorderError> for Failure {
    fn from(e: RecorderError) -> Self {
        Failure(MedsimStatus::Recorder, e.to_string())
    }
}

impl From<PhysicsError> for Failure {
    fn from(e: PhysicsError) -> Self {
        let s = if matches!(e, PhysicsError::Unreachable(_)) { MedsimStatus::Unreachable } else { MedsimStatus::Physics };
        Failure(s, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scene(s) => s.into(),
            SimError::Physics(p) => p.into(),
            SimError::Recorder(r) => r.into(),
            SimError::Io(io) => Failure(MedsimStatus::Io, io.to_string()),
            other => Failure(MedsimStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(MedsimStatus::Schema, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MedsimStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(MedsimStatus::NullArgument, format!("{name} is null"))
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MedsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MedsimStatus::Ok,
        Ok(Err(Failure(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            MedsimStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(MedsimStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = CString::new(s).map_err(|_| invalid("string contains a nul byte"))?.into_raw();
    Ok(())
}

unsafe fn out_handle<T>(out: *mut *mut T, v: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn handle<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn motor_from(a: &[f64]) -> Motor {
    Motor::from_array(a.try_into().expect("8 coefficients"))
}

unsafe fn records(ids: *const u32, motors: *const f64, n: usize) -> Result<Vec<(u32, Motor)>, Failure> {
    let ids = slice(ids, n, "ids")?;
    let m = slice(motors, 8 * n, "motors")?;
    Ok(ids.iter().enumerate().map(|(i, &id)| (id, motor_from(&m[8 * i..8 * i + 8]))).collect())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn medsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn medsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn medsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub unsafe extern "C" fn medsim_bytes_free(data: *mut u8, len: usize) {
    if !data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(data, len)));
    }
}

unsafe fn out_bytes(data: *mut *mut u8, len: *mut usize, bytes: Vec<u8>) -> Result<(), Failure> {
    if data.is_null() || len.is_null() {
        return Err(null("out"));
    }
    let b = bytes.into_boxed_slice();
    *len = b.len();
    *data = Box::into_raw(b).cast();
    Ok(())
}

// ---- geometry and codec ----

/// Motor (8 coefficients) of a pose given as position xyz and unit
/// quaternion wxyz.
#[no_mangle]
pub unsafe extern "C" fn medsim_motor_from_pose(position: *const f64, rotation: *const f64, out: *mut f64) -> MedsimStatus {
    guard(|| {
        let p = slice(position, 3, "position")?;
        let q = slice(rotation, 4, "rotation")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pose = Pose::new(Vec3::new(p[0], p[1], p[2]), Quat::new(q[0], q[1], q[2], q[3]));
        let m = Motor::from_pose(&pose).map_err(|e| invalid(e.to_string()))?;
        std::slice::from_raw_parts_mut(out, 8).copy_from_slice(&m.to_array());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_motor_interpolate(a: *const f64, b: *const f64, t: f64, out: *mut f64) -> MedsimStatus {
    guard(|| {
        let (a, b) = (motor_from(slice(a, 8, "a")?), motor_from(slice(b, 8, "b")?));
        if out.is_null() {
            return Err(null("out"));
        }
        let m = motor_interpolate(&a, &b, t).map_err(|e| invalid(e.to_string()))?;
        std::slice::from_raw_parts_mut(out, 8).copy_from_slice(&m.to_array());
        Ok(())
    })
}

/// Encode an update packet into `buf`. `motors` holds 8 coefficients per
/// id. `written` receives the packet length, also when `buf` is too small.
#[no_mangle]
pub unsafe extern "C" fn medsim_encode_update(
    session_id: u32,
    sender_id: u32,
    tick: u32,
    ids: *const u32,
    motors: *const f64,
    n: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> MedsimStatus {
    guard(|| {
        let bytes = encode_update(session_id, sender_id, tick, &records(ids, motors, n)?)?;
        if written.is_null() {
            return Err(null("written"));
        }
        *written = bytes.len();
        if bytes.len() > cap || buf.is_null() {
            return Err(Failure(MedsimStatus::BufferTooSmall, format!("packet needs {} bytes, buffer has {cap}", bytes.len())));
        }
        std::slice::from_raw_parts_mut(buf, bytes.len()).copy_from_slice(&bytes);
        Ok(())
    })
}

/// Decode an update packet. Up to `cap` records are copied out; `n` receives
/// the record count in the packet.
#[no_mangle]
pub unsafe extern "C" fn medsim_decode_update(
    data: *const u8,
    len: usize,
    tick: *mut u32,
    ids: *mut u32,
    motors: *mut f64,
    cap: usize,
    n: *mut usize,
) -> MedsimStatus {
    guard(|| {
        let p = decode_update(slice(data, len, "data")?)?;
        if n.is_null() {
            return Err(null("n"));
        }
        *n = p.records.len();
        if !tick.is_null() {
            *tick = p.tick;
        }
        if p.records.len() > cap {
            return Err(Failure(MedsimStatus::BufferTooSmall, format!("packet has {} records, room for {cap}", p.records.len())));
        }
        for (i, r) in p.records.iter().enumerate() {
            *ids.add(i) = r.object_id;
            std::slice::from_raw_parts_mut(motors.add(8 * i), 8).copy_from_slice(&r.motor.to_array());
        }
        Ok(())
    })
}

// ---- scenegraph ----

#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_from_json(json: *const c_char, out: *mut *mut MedsimScenegraph) -> MedsimStatus {
    guard(|| {
        let graph = Scenegraph::from_json(str_arg(json, "json")?, Default::default())?;
        out_handle(out, MedsimScenegraph { graph })
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_free(g: *mut MedsimScenegraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Apply one ActionEvent (JSON); `outcome_json` (optional) receives the outcome.
#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_perform(g: *mut MedsimScenegraph, event_json: *const c_char, outcome_json: *mut *mut c_char) -> MedsimStatus {
    guard(|| {
        let g = handle(g, "scenegraph")?;
        let ev: ActionEvent = serde_json::from_str(str_arg(event_json, "event_json")?)?;
        let outcome = g.graph.perform_action(&ev)?;
        if !outcome_json.is_null() {
            out_string(outcome_json, serde_json::to_string(&outcome)?)?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_undo(g: *mut MedsimScenegraph, node_id: *const c_char) -> MedsimStatus {
    guard(|| Ok(handle(g, "scenegraph")?.graph.undo_action(str_arg(node_id, "node_id")?)?))
}

/// Active node ids as a JSON array.
#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_frontier(g: *mut MedsimScenegraph, out: *mut *mut c_char) -> MedsimStatus {
    guard(|| {
        let f: Vec<String> = handle(g, "scenegraph")?.graph.frontier().into_iter().collect();
        out_string(out, serde_json::to_string(&f)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_is_finished(g: *mut MedsimScenegraph, finished: *mut bool) -> MedsimStatus {
    guard(|| {
        let g = handle(g, "scenegraph")?;
        *finished.as_mut().ok_or_else(|| null("finished"))? = g.graph.is_finished();
        Ok(())
    })
}

/// Session report JSON. `weighted` selects action-weighted totals.
#[no_mangle]
pub unsafe extern "C" fn medsim_scenegraph_report(
    g: *mut MedsimScenegraph,
    session_id: *const c_char,
    started_us: u64,
    finished_us: u64,
    weighted: bool,
    out: *mut *mut c_char,
) -> MedsimStatus {
    guard(|| {
        let mode = if weighted { TotalMode::ActionWeighted } else { TotalMode::Mean };
        let r = handle(g, "scenegraph")?.graph.report(str_arg(session_id, "session_id")?, started_us, finished_us, mode)?;
        out_string(out, r.to_json().map_err(|e| invalid(e.to_string()))?)
    })
}

// ---- recorder ----

#[no_mangle]
pub unsafe extern "C" fn medsim_recorder_new(session_id: *const u8, tick_rate_hz: u32, user_count: u16, out: *mut *mut MedsimRecorder) -> MedsimStatus {
    guard(|| {
        let id: [u8; 16] = slice(session_id, 16, "session_id")?.try_into().expect("16 bytes");
        let rec = Recorder::new(Vec::new(), RecordingHeader::new(id, tick_rate_hz, user_count))?;
        out_handle(out, MedsimRecorder { rec })
    })
}

/// Record one frame. `events_json` (optional) is a JSON array of ActionEvents.
/// `written` (optional) tells whether anything was written.
#[no_mangle]
pub unsafe extern "C" fn medsim_recorder_frame(
    r: *mut MedsimRecorder,
    timestamp_us: u64,
    ids: *const u32,
    motors: *const f64,
    n: usize,
    events_json: *const c_char,
    written: *mut bool,
) -> MedsimStatus {
    guard(|| {
        let r = handle(r, "recorder")?;
        let scene: BTreeMap<u32, Motor> = records(ids, motors, n)?.into_iter().collect();
        let events: Vec<RecordedEvent> = if events_json.is_null() {
            Vec::new()
        } else {
            serde_json::from_str::<Vec<ActionEvent>>(str_arg(events_json, "events_json")?)?.into_iter().map(RecordedEvent::Action).collect()
        };
        let w = r.rec.record_frame(&scene, &events, timestamp_us)?;
        if let Some(out) = written.as_mut() {
            *out = w;
        }
        Ok(())
    })
}

/// Finish the recording and hand out the file bytes. Always consumes `r`.
#[no_mangle]
pub unsafe extern "C" fn medsim_recorder_finish(r: *mut MedsimRecorder, data: *mut *mut u8, len: *mut usize) -> MedsimStatus {
    guard(|| {
        if r.is_null() {
            return Err(null("recorder"));
        }
        let r = Box::from_raw(r);
        out_bytes(data, len, r.rec.finish()?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_recorder_free(r: *mut MedsimRecorder) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[no_mangle]
pub unsafe extern "C" fn medsim_recording_open(data: *const u8, len: usize, out: *mut *mut MedsimRecording) -> MedsimStatus {
    guard(|| {
        let rec = RecordedSession::parse(slice(data, len, "data")?)?;
        out_handle(out, MedsimRecording { rec })
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_recording_free(r: *mut MedsimRecording) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

#[no_mangle]
pub unsafe extern "C" fn medsim_recording_span(r: *mut MedsimRecording, start_us: *mut u64, end_us: *mut u64, frames: *mut usize) -> MedsimStatus {
    guard(|| {
        let r = handle(r, "recording")?;
        if let Some(s) = start_us.as_mut() {
            *s = r.rec.start_us();
        }
        if let Some(e) = end_us.as_mut() {
            *e = r.rec.end_us();
        }
        if let Some(f) = frames.as_mut() {
            *f = r.rec.frames.len();
        }
        Ok(())
    })
}

/// Scene state at `t_us`, ids ascending. Same buffer contract as
/// [`medsim_decode_update`].
#[no_mangle]
pub unsafe extern "C" fn medsim_recording_state_at(
    r: *mut MedsimRecording,
    t_us: u64,
    ids: *mut u32,
    motors: *mut f64,
    cap: usize,
    n: *mut usize,
) -> MedsimStatus {
    guard(|| {
        let state = handle(r, "recording")?.rec.state_at(t_us)?;
        *n.as_mut().ok_or_else(|| null("n"))? = state.len();
        if state.len() > cap {
            return Err(Failure(MedsimStatus::BufferTooSmall, format!("state has {} objects, room for {cap}", state.len())));
        }
        for (i, (id, m)) in state.iter().enumerate() {
            *ids.add(i) = *id;
            std::slice::from_raw_parts_mut(motors.add(8 * i), 8).copy_from_slice(&m.to_array());
        }
        Ok(())
    })
}

// ---- physics ----

#[no_mangle]
pub unsafe extern "C" fn medsim_physics_world_new(dt: f64, ground: bool, out: *mut *mut MedsimPhysicsWorld) -> MedsimStatus {
    guard(|| {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be > 0, got {dt}")));
        }
        let world = PhysicsWorld::new(WorldConfig { dt, ground, ..WorldConfig::default() });
        out_handle(out, MedsimPhysicsWorld { world })
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_physics_world_free(w: *mut MedsimPhysicsWorld) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Register a body. `dims`: sphere `[r, _, _]`, box half extents, capsule
/// `[r, half_length, _]`. Pose as position xyz and quaternion wxyz.
#[no_mangle]
pub unsafe extern "C" fn medsim_physics_register(
    w: *mut MedsimPhysicsWorld,
    id: u32,
    shape: MedsimShape,
    dims: *const f64,
    mass: f64,
    friction: f64,
    restitution: f64,
    kinematic: bool,
    position: *const f64,
    rotation: *const f64,
) -> MedsimStatus {
    guard(|| {
        let w = handle(w, "world")?;
        let d = slice(dims, 3, "dims")?;
        let collider = match shape {
            MedsimShape::Sphere => Collider::Sphere { radius: d[0] },
            MedsimShape::Box => Collider::Box { half_extents: Vec3::new(d[0], d[1], d[2]) },
            MedsimShape::Capsule => Collider::Capsule { radius: d[0], half_length: d[1] },
        };
        let p = slice(position, 3, "position")?;
        let q = slice(rotation, 4, "rotation")?;
        let desc = PhysicsDescriptor { id, collider, mass, friction, restitution, kinematic };
        w.world.register(desc, Pose::new(Vec3::new(p[0], p[1], p[2]), Quat::new(q[0], q[1], q[2], q[3])))?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_physics_step(w: *mut MedsimPhysicsWorld, steps: u32) -> MedsimStatus {
    guard(|| {
        let w = handle(w, "world")?;
        for _ in 0..steps {
            w.world.step();
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn medsim_physics_position(w: *mut MedsimPhysicsWorld, id: u32, out: *mut f64) -> MedsimStatus {
    guard(|| {
        let p = handle(w, "world")?.world.position(id).ok_or_else(|| invalid(format!("object {id} is not registered")))?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[p.x, p.y, p.z]);
        Ok(())
    })
}

// ---- whole sessions ----

/// Run a scripted session on ideal links and return the report JSON.
#[no_mangle]
pub unsafe extern "C" fn medsim_run_session(scenario_json: *const c_char, clients: u32, seed: u64, report_json: *mut *mut c_char) -> MedsimStatus {
    guard(|| {
        let doc = medsim::scenegraph::ScenarioDocument::from_json(str_arg(scenario_json, "scenario_json")?)?;
        let mut cfg = RunConfig::new(doc, clients, seed);
        cfg.profile = medsim::net::NetProfile::ideal(20.0, seed);
        let out = sim::run(cfg)?;
        out_string(report_json, out.report_json()?)
    })
}
