use std::ffi::{c_char, CStr, CString};
use std::ptr;

use medsim_ffi::*;

const QUIZ: &str = r#"{"version": 1, "actions": [
    {"id": "count", "prototype": "question", "params": {"prompt": "how many?", "options": ["4", "5"], "correct": ["5"]}}
]}"#;

fn take_string(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { medsim_string_free(p) };
    s
}

fn last_error() -> String {
    let p = medsim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scenegraph_round_trip() {
    let json = CString::new(QUIZ).unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(medsim_scenegraph_from_json(json.as_ptr(), &mut g), MedsimStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(medsim_scenegraph_frontier(g, &mut f), MedsimStatus::Ok);
        assert_eq!(take_string(f), r#"["count"]"#);

        let ev = CString::new(r#"{"node_id": "count", "timestamp_us": 1000000, "payload": {"type": "question", "chosen": ["5"]}}"#).unwrap();
        let mut outcome = ptr::null_mut();
        assert_eq!(medsim_scenegraph_perform(g, ev.as_ptr(), &mut outcome), MedsimStatus::Ok);
        assert!(take_string(outcome).contains("count"));

        let mut done = false;
        assert_eq!(medsim_scenegraph_is_finished(g, &mut done), MedsimStatus::Ok);
        assert!(done);

        let sid = CString::new("s1").unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(medsim_scenegraph_report(g, sid.as_ptr(), 0, 1_000_000, false, &mut report), MedsimStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(report)).unwrap();
        assert_eq!(v["session_id"], "s1");
        medsim_scenegraph_free(g);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(medsim_scenegraph_from_json(ptr::null(), &mut g), MedsimStatus::NullArgument);
        assert!(last_error().contains("null"));

        let bad = CString::new(r#"{"version": 1, "actions": [{"id": "a", "prototype": "juggle"}]}"#).unwrap();
        assert_eq!(medsim_scenegraph_from_json(bad.as_ptr(), &mut g), MedsimStatus::Schema);
        assert!(g.is_null());

        let q = r#"{"prompt": "?", "options": ["x"], "correct": ["x"]}"#;
        let cyc = CString::new(format!(
            r#"{{"version": 1, "actions": [{{"id": "a", "prototype": "question", "params": {q}}}, {{"id": "b", "prototype": "question", "params": {q}}}], "edges": [["a", "b"], ["b", "a"]]}}"#
        ))
        .unwrap();
        assert_eq!(medsim_scenegraph_from_json(cyc.as_ptr(), &mut g), MedsimStatus::Cycle);

        let bytes = [0u8; 4];
        let mut rec = ptr::null_mut();
        assert_eq!(medsim_recording_open(bytes.as_ptr(), bytes.len(), &mut rec), MedsimStatus::Recorder);

        let mut w = ptr::null_mut();
        assert_eq!(medsim_physics_world_new(-1.0, true, &mut w), MedsimStatus::InvalidArgument);
    }
}

#[test]
fn codec_round_trip_and_small_buffer() {
    let id_pose = [0.0, 0.0, 0.0];
    let rot = [1.0, 0.0, 0.0, 0.0];
    let mut m = [0.0; 8];
    unsafe {
        assert_eq!(medsim_motor_from_pose([0.1, 0.2, 0.3].as_ptr(), rot.as_ptr(), m.as_mut_ptr()), MedsimStatus::Ok);
        let mut origin = [0.0; 8];
        assert_eq!(medsim_motor_from_pose(id_pose.as_ptr(), rot.as_ptr(), origin.as_mut_ptr()), MedsimStatus::Ok);
        let mut half = [0.0; 8];
        assert_eq!(medsim_motor_interpolate(origin.as_ptr(), m.as_ptr(), 0.5, half.as_mut_ptr()), MedsimStatus::Ok);

        let ids = [7u32, 9];
        let motors: Vec<f64> = m.iter().chain(half.iter()).copied().collect();
        let mut written = 0usize;
        let mut tiny = [0u8; 4];
        assert_eq!(medsim_encode_update(1, 2, 3, ids.as_ptr(), motors.as_ptr(), 2, tiny.as_mut_ptr(), tiny.len(), &mut written), MedsimStatus::BufferTooSmall);
        let mut buf = vec![0u8; written];
        assert_eq!(medsim_encode_update(1, 2, 3, ids.as_ptr(), motors.as_ptr(), 2, buf.as_mut_ptr(), buf.len(), &mut written), MedsimStatus::Ok);

        let (mut tick, mut n) = (0u32, 0usize);
        let mut out_ids = [0u32; 2];
        let mut out_m = [0.0f64; 16];
        assert_eq!(medsim_decode_update(buf.as_ptr(), buf.len(), &mut tick, out_ids.as_mut_ptr(), out_m.as_mut_ptr(), 2, &mut n), MedsimStatus::Ok);
        assert_eq!((tick, n, out_ids), (3, 2, ids));
        for (a, b) in out_m.iter().zip(&motors) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // halfway to a pure translation t: dual vector part is t/4
        for (k, t) in [0.1, 0.2, 0.3].iter().enumerate() {
            assert!((half[5 + k] - t / 4.0).abs() < 1e-9, "{half:?}");
        }

        buf[0] ^= 0xff;
        assert_eq!(medsim_decode_update(buf.as_ptr(), buf.len(), &mut tick, out_ids.as_mut_ptr(), out_m.as_mut_ptr(), 2, &mut n), MedsimStatus::Codec);
    }
}

#[test]
fn recorder_and_recording() {
    let sid = [5u8; 16];
    let rot = [1.0, 0.0, 0.0, 0.0];
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(medsim_recorder_new(sid.as_ptr(), 20, 1, &mut r), MedsimStatus::Ok);
        for k in 0..20u64 {
            let mut m = [0.0; 8];
            medsim_motor_from_pose([k as f64 * 0.01, 0.0, 0.0].as_ptr(), rot.as_ptr(), m.as_mut_ptr());
            let ids = [1u32];
            assert_eq!(medsim_recorder_frame(r, k * 50_000, ids.as_ptr(), m.as_ptr(), 1, ptr::null(), ptr::null_mut()), MedsimStatus::Ok);
        }
        let (mut data, mut len) = (ptr::null_mut(), 0usize);
        assert_eq!(medsim_recorder_finish(r, &mut data, &mut len), MedsimStatus::Ok);
        let bytes = std::slice::from_raw_parts(data, len).to_vec();
        medsim_bytes_free(data, len);
        assert_eq!(&bytes[..4], b"MREC");

        let mut rec = ptr::null_mut();
        assert_eq!(medsim_recording_open(bytes.as_ptr(), bytes.len(), &mut rec), MedsimStatus::Ok);
        let (mut start, mut end, mut frames) = (0u64, 0u64, 0usize);
        assert_eq!(medsim_recording_span(rec, &mut start, &mut end, &mut frames), MedsimStatus::Ok);
        assert_eq!((start, end), (0, 19 * 50_000));
        assert!(frames >= 1);

        let mut n = 0usize;
        let mut ids = [0u32; 1];
        let mut m = [0.0; 8];
        assert_eq!(medsim_recording_state_at(rec, 500_000, ids.as_mut_ptr(), m.as_mut_ptr(), 1, &mut n), MedsimStatus::Ok);
        assert_eq!((n, ids[0]), (1, 1));
        let mut expect = [0.0; 8];
        medsim_motor_from_pose([0.10, 0.0, 0.0].as_ptr(), rot.as_ptr(), expect.as_mut_ptr());
        for (a, b) in m.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        medsim_recording_free(rec);
    }
}

#[test]
fn physics_world_drops_a_sphere_onto_the_ground() {
    let rot = [1.0, 0.0, 0.0, 0.0];
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(medsim_physics_world_new(1.0 / 60.0, true, &mut w), MedsimStatus::Ok);
        let dims = [0.1, 0.0, 0.0];
        assert_eq!(
            medsim_physics_register(w, 1, MedsimShape::Sphere, dims.as_ptr(), 1.0, 0.5, 0.0, false, [0.0, 1.0, 0.0].as_ptr(), rot.as_ptr()),
            MedsimStatus::Ok
        );
        assert_eq!(medsim_physics_step(w, 300), MedsimStatus::Ok);
        let mut p = [0.0; 3];
        assert_eq!(medsim_physics_position(w, 1, p.as_mut_ptr()), MedsimStatus::Ok);
        assert!(p[1] < 0.2 && p[1] > 0.05, "resting height {}", p[1]);
        assert_eq!(medsim_physics_position(w, 99, p.as_mut_ptr()), MedsimStatus::InvalidArgument);
        medsim_physics_world_free(w);
    }
}

#[test]
fn whole_session_report() {
    let json = CString::new(QUIZ).unwrap();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(medsim_run_session(json.as_ptr(), 1, 3, &mut out), MedsimStatus::Ok);
    }
    let v: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(v["total_score"].as_f64(), Some(100.0));
    assert_eq!(v["actions"].as_array().map(Vec::len), Some(1));
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(medsim_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// The generated header is valid C when a compiler is around.
#[test]
fn header_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/medsim.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build script");
    assert!(text.contains("medsim_scenegraph_from_json") && text.contains("MEDSIM_STATUS_PANIC"));
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, format!("#include \"{}\"\nint main(void) {{ return MEDSIM_STATUS_OK; }}\n", header.display())).unwrap();
    match std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler, skipping syntax check"),
    }
}
