use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::analytics::FactorRegistry;
use crate::geom::{Quat, Vec3};
use crate::scenegraph::{ActionEvent, EventPayload, ScenarioDocument};

fn header() -> RecordingHeader {
    RecordingHeader::new(*b"0123456789abcdef", 20, 1)
}

fn moving(id: u32, t_s: f64) -> Motor {
    let p = Vec3::new(0.1 * (t_s + id as f64).sin(), 0.05 * t_s, 0.02 * id as f64);
    let q = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.3).normalized(), 0.4 * t_s + id as f64);
    Motor::from_pose(&crate::geom::Pose::new(p, q)).unwrap()
}

fn answer(id: &str, t: u64) -> ActionEvent {
    ActionEvent { node_id: id.into(), timestamp_us: t, payload: EventPayload::Question { chosen: vec!["a".into()] }, trajectory: vec![] }
}

fn linear_scenario() -> Scenegraph {
    let q = |id: &str| json!({"id": id, "prototype": "question", "params": {"prompt": "?", "options": ["a", "b"], "correct": ["a"]}});
    let doc: ScenarioDocument =
        serde_json::from_value(json!({"version": 1, "name": "t", "actions": [q("A"), q("B"), q("C")], "edges": [["A", "B"], ["B", "C"]]})).unwrap();
    Scenegraph::load(&doc, FactorRegistry::default().shared()).unwrap()
}

/// 20 Hz, `objects` moving objects, answers to A, B, C at 1 s, 2 s, 3 s.
fn record_session(objects: u32, seconds: u32) -> Vec<u8> {
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    for tick in 0..seconds * 20 {
        let t_us = tick as u64 * 50_000;
        let scene: BTreeMap<u32, Motor> = (0..objects).map(|i| (i, moving(i, t_us as f64 / 1e6))).collect();
        let events: Vec<RecordedEvent> = match tick {
            20 => vec![RecordedEvent::UserJoin(7), RecordedEvent::Action(answer("A", t_us))],
            40 => vec![RecordedEvent::Action(answer("B", t_us))],
            60 => vec![RecordedEvent::Action(answer("C", t_us)), RecordedEvent::Marker("done".into())],
            _ => vec![],
        };
        rec.record_frame(&scene, &events, t_us).unwrap();
    }
    rec.finish().unwrap()
}

#[test]
fn empty_recording_is_header_only() {
    let bytes = Recorder::new(Vec::new(), header()).unwrap().finish().unwrap();
    assert_eq!(bytes.len(), format::HEADER_LEN);
    assert_eq!(&bytes[..4], b"MREC");
    let s = RecordedSession::parse(&bytes).unwrap();
    assert!(s.is_empty());
    assert_eq!(s.header, header());
    let mut n = 0;
    s.replay(0, |_| n += 1).unwrap();
    assert_eq!(n, 0);
    assert!(matches!(s.replay(1, |_| ()), Err(RecorderError::Range(_))));
}

#[test]
fn header_layout_is_exact() {
    let h = RecordingHeader::new([9; 16], 0x01020304, 0x0506);
    let b = h.encode();
    assert_eq!(b[4..6], [1, 0]);
    assert_eq!(b[6..22], [9; 16]);
    assert_eq!(b[22..26], [4, 3, 2, 1]);
    assert_eq!(b[26..28], [6, 5]);
    assert_eq!(RecordingHeader::decode(&b).unwrap(), h);
    let mut bad = b;
    bad[0] = b'X';
    assert!(matches!(RecordingHeader::decode(&bad), Err(RecorderError::Format(_))));
}

#[test]
fn timestamps_must_increase() {
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    let scene = BTreeMap::from([(1, Motor::IDENTITY)]);
    rec.record_frame(&scene, &[], 100).unwrap();
    assert!(matches!(rec.record_frame(&scene, &[], 100), Err(RecorderError::Ordering(_))));
    assert!(matches!(rec.record_frame(&scene, &[], 50), Err(RecorderError::Ordering(_))));
}

#[test]
fn static_scene_writes_only_keyframes() {
    let scene: BTreeMap<u32, Motor> = (0..3).map(|i| (i, moving(i, 0.0))).collect();
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    for tick in 0..30 * 20u64 {
        rec.record_frame(&scene, &[], tick * 50_000).unwrap();
    }
    let s = RecordedSession::parse(&rec.finish().unwrap()).unwrap();
    let ts: Vec<u64> = s.frames.iter().map(|f| f.timestamp_us).collect();
    assert_eq!(ts, vec![0, 5_000_000, 10_000_000, 15_000_000, 20_000_000, 25_000_000]);
    assert!(s.frames.iter().all(|f| f.keyframe && f.transforms.len() == 3));
    assert_eq!(s.index.as_ref().unwrap().len(), 6);
}

#[test]
fn sub_threshold_oscillation_is_not_recorded() {
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    for tick in 0..200u64 {
        let t = tick as f64 * 0.05;
        let wobble = Motor::from_translation(Vec3::new(0.2e-3 * (t * 7.0).sin(), 0.0, 0.0));
        let scene = BTreeMap::from([(1, wobble), (2, moving(2, t))]);
        rec.record_frame(&scene, &[], tick * 50_000).unwrap();
    }
    let s = RecordedSession::parse(&rec.finish().unwrap()).unwrap();
    for f in &s.frames {
        assert_eq!(f.transforms.iter().any(|(id, _)| *id == 1), f.keyframe, "frame at {}", f.timestamp_us);
    }
    // the moving object is written every tick
    assert_eq!(s.frames.len(), 200);
}

#[test]
fn storage_budget_for_reference_scenario() {
    // 10 objects moving every tick at 20 Hz for one minute, 5 events/s
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    for tick in 0..60 * 20u64 {
        let t_us = tick * 50_000;
        let scene: BTreeMap<u32, Motor> = (0..10).map(|i| (i, moving(i, t_us as f64 / 1e6))).collect();
        let events: Vec<RecordedEvent> = if tick % 4 == 0 {
            vec![RecordedEvent::Action(ActionEvent {
                node_id: format!("use-{}", tick % 7),
                timestamp_us: t_us,
                payload: EventPayload::Use { tool: "scalpel".into(), target: "liver".into(), dwell_s: 1.5, gesture_samples: 30 },
                trajectory: vec![],
            })]
        } else {
            vec![]
        };
        rec.record_frame(&scene, &events, t_us).unwrap();
    }
    let bytes = rec.finish().unwrap();
    let transform_bytes = 10 * 36 * 20 * 60;
    assert_eq!(transform_bytes, 432_000);
    assert!(bytes.len() >= transform_bytes, "{} bytes", bytes.len());
    assert!(bytes.len() <= 1_000_000, "{} bytes per minute", bytes.len());
}

#[test]
fn replay_then_rerecord_is_identical() {
    let original = record_session(4, 12);
    let s = RecordedSession::parse(&original).unwrap();
    let mut rec = Recorder::new(Vec::new(), s.header).unwrap();
    s.replay(0, |item| {
        rec.record_frame(&item.state, &item.events, item.timestamp_us).unwrap();
    })
    .unwrap();
    let again = rec.finish().unwrap();
    assert_eq!(again, original);
    assert_eq!(s.to_bytes().unwrap(), original);
}

#[test]
fn replays_are_byte_identical() {
    let s = RecordedSession::parse(&record_session(5, 8)).unwrap();
    let run = |from| {
        let mut out = Vec::new();
        s.replay(from, |item| item.encode(&mut out).unwrap()).unwrap();
        out
    };
    assert_eq!(run(0), run(0));
    assert_eq!(run(3_210_000), run(3_210_000));
}

/// Oracle: apply every frame from the start, never using keyframes as a
/// shortcut.
fn play_from_start(s: &RecordedSession, t_us: u64) -> BTreeMap<u32, Motor> {
    let mut state = BTreeMap::new();
    for f in s.frames.iter().filter(|f| f.timestamp_us <= t_us) {
        for &(id, m) in &f.transforms {
            state.insert(id, m);
        }
    }
    state
}

#[test]
fn seek_matches_play_from_start() {
    let s = RecordedSession::parse(&record_session(6, 16)).unwrap();
    for t in [0, 50_000, 4_999_999, 5_000_000, 7_333_333, 11_000_000, s.end_us()] {
        let mut first = None;
        s.replay(t, |item| {
            first.get_or_insert_with(|| item.clone());
        })
        .unwrap();
        let first = first.unwrap();
        assert_eq!(first.timestamp_us, t);
        let oracle = play_from_start(&s, t);
        assert_eq!(first.state.keys().collect::<Vec<_>>(), oracle.keys().collect::<Vec<_>>());
        for (id, m) in &oracle {
            assert!(first.state[id].max_coefficient_diff(m) <= 1e-6, "object {id} at {t}");
        }
    }
    assert!(matches!(s.replay(s.end_us() + 1, |_| ()), Err(RecorderError::Range(_))));
}

#[test]
fn interpolated_samples_stay_between_writes() {
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    // written only every 4th tick: 0.6 mm steps, 0.15 mm per tick otherwise
    for tick in 0..40u64 {
        let x = 0.15e-3 * tick as f64;
        rec.record_frame(&BTreeMap::from([(1, Motor::from_translation(Vec3::new(x, 0.0, 0.0)))]), &[], tick * 50_000).unwrap();
    }
    let s = RecordedSession::parse(&rec.finish().unwrap()).unwrap();
    let tracks = s.tracks();
    let track = &tracks[&1];
    assert!(track.len() < 40);
    let (t0, m0) = track[1];
    let (t1, m1) = track[2];
    let mid = s.sample(&tracks, (t0 + t1) / 2).unwrap()[&1].translation().x;
    let expect = 0.5 * (m0.translation().x + m1.translation().x);
    assert!((mid - expect).abs() < 1e-7, "{mid} vs {expect}");
    assert_eq!(s.sample(&tracks, t0).unwrap()[&1], m0);
}

#[test]
fn corrupt_chunk_names_its_offset() {
    let bytes = record_session(3, 6);
    let s = RecordedSession::parse(&bytes).unwrap();
    let k = 17;
    let at = s.offsets[k] as usize;
    let mut bad = bytes.clone();
    bad[at + 20] ^= 0x40;
    match RecordedSession::parse(&bad) {
        Err(RecorderError::Integrity { offset, reason }) => {
            assert_eq!(offset, s.offsets[k]);
            assert!(reason.contains("crc"), "{reason}");
        }
        other => panic!("expected integrity error, got {other:?}"),
    }
    let truncated = &bytes[..s.offsets[k] as usize + 5];
    assert!(matches!(RecordedSession::parse(truncated), Err(RecorderError::Integrity { offset, .. }) if offset == s.offsets[k]));
}

#[test]
fn unknown_event_codes_round_trip() {
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    let ev = RecordedEvent::Raw { code: EVENT_AUDIO_MARKER, payload: vec![1, 2, 3] };
    rec.record_frame(&BTreeMap::new(), std::slice::from_ref(&ev), 0).unwrap();
    let s = RecordedSession::parse(&rec.finish().unwrap()).unwrap();
    assert_eq!(s.frames[0].events, vec![ev]);
}

#[test]
fn resume_rebuilds_scenegraph_frontier() {
    let s = RecordedSession::parse(&record_session(2, 5)).unwrap();
    let set = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();

    let p = s.resume(0, linear_scenario()).unwrap();
    assert_eq!(p.scenegraph.frontier(), linear_scenario().frontier());
    assert_eq!(p.events_applied, 0);

    // after A (1 s) and B (2 s), before C (3 s)
    let p = s.resume(2_500_000, linear_scenario()).unwrap();
    assert_eq!(p.scenegraph.frontier(), set(&["C"]));
    assert_eq!(p.events_applied, 2);
    assert_eq!(p.users, BTreeSet::from([7]));

    let end = s.resume(s.end_us(), linear_scenario()).unwrap();
    assert!(end.scenegraph.is_finished());
    let last = play_from_start(&s, s.end_us());
    assert_eq!(end.transforms, last);
}

#[test]
fn resume_reports_the_failing_event() {
    let mut rec = Recorder::new(Vec::new(), header()).unwrap();
    rec.record_frame(&BTreeMap::new(), &[RecordedEvent::Action(answer("A", 0))], 0).unwrap();
    rec.record_frame(&BTreeMap::new(), &[RecordedEvent::Marker("x".into()), RecordedEvent::Action(answer("C", 10))], 10).unwrap();
    let s = RecordedSession::parse(&rec.finish().unwrap()).unwrap();
    match s.resume(10, linear_scenario()) {
        Err(RecorderError::CorruptRecording { offset, timestamp_us, index, reason }) => {
            assert_eq!((offset, timestamp_us, index), (s.offsets[1], 10, 1));
            assert!(reason.contains("'C'"), "{reason}");
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("resume should fail"),
    }
}

#[test]
fn continued_recording_matches_uninterrupted() {
    let full = record_session(3, 10);
    let s = RecordedSession::parse(&full).unwrap();
    let cut_at = 4_000_000;
    let mut rec = Recorder::continue_from(&s, cut_at, Vec::new()).unwrap();
    for tick in (cut_at / 50_000 + 1)..200 {
        let t_us = tick * 50_000;
        let scene: BTreeMap<u32, Motor> = (0..3).map(|i| (i, moving(i, t_us as f64 / 1e6))).collect();
        rec.record_frame(&scene, &[], t_us).unwrap();
    }
    assert_eq!(rec.finish().unwrap(), full);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_sessions_round_trip(steps in prop::collection::vec((1u64..400_000, prop::collection::vec((0u32..6, -1.0f64..1.0, -3.0f64..3.0), 0..6), 0usize..3), 1..80)) {
        let mut rec = Recorder::new(Vec::new(), header()).unwrap();
        let mut scene = BTreeMap::new();
        let mut t = 0;
        for (dt, moves, n_ev) in &steps {
            t += dt;
            for &(id, x, angle) in moves {
                scene.insert(id, Motor::from_pose(&crate::geom::Pose::new(Vec3::new(x, 0.0, 0.0), Quat::from_axis_angle(Vec3::Z, angle))).unwrap());
            }
            let events: Vec<RecordedEvent> = (0..*n_ev).map(|k| RecordedEvent::Marker(format!("{t}-{k}"))).collect();
            rec.record_frame(&scene, &events, t).unwrap();
        }
        let bytes = rec.finish().unwrap();
        let s = RecordedSession::parse(&bytes).unwrap();
        prop_assert_eq!(s.to_bytes().unwrap(), bytes);
        // every written frame carries either a keyframe, a change or an event
        for f in &s.frames {
            prop_assert!(f.keyframe || !f.transforms.is_empty() || !f.events.is_empty());
        }
        // final held state is within the change threshold of the live scene
        let held = s.state_at(s.end_us()).unwrap();
        for (id, m) in &scene {
            prop_assert!(!changed(&held[id], &m.to_f32_precision()));
        }
    }
}
