use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::analytics::{FactorRegistry, TotalMode};
use crate::geom::{Pose, Quat, Vec3};

fn registry() -> Arc<FactorRegistry> {
    FactorRegistry::default().shared()
}

fn question(id: &str) -> serde_json::Value {
    json!({"id": id, "prototype": "question", "params": {"prompt": "?", "options": ["a", "b"], "correct": ["a"]}})
}

fn doc(actions: Vec<serde_json::Value>, edges: &[(&str, &str)]) -> ScenarioDocument {
    serde_json::from_value(json!({"version": 1, "name": "t", "actions": actions, "edges": edges})).unwrap()
}

fn answer(id: &str, t: u64) -> ActionEvent {
    ActionEvent { node_id: id.into(), timestamp_us: t, payload: EventPayload::Question { chosen: vec!["a".into()] }, trajectory: vec![] }
}

fn set(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn diamond() -> Scenegraph {
    let d = doc(["A", "B", "C", "D"].iter().map(|i| question(i)).collect(), &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]);
    Scenegraph::load(&d, registry()).unwrap()
}

/// Frontier by exhaustive reachability: a node is ready iff every node that
/// can reach it is completed and it is not completed itself.
fn frontier_oracle(g: &Scenegraph) -> BTreeSet<String> {
    let ids = g.node_ids();
    let edges = g.edges();
    let reaches = |a: &str, b: &str| -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![a.to_string()];
        while let Some(x) = stack.pop() {
            for (p, q) in &edges {
                if *p == x && seen.insert(q.clone()) {
                    stack.push(q.clone());
                }
            }
        }
        seen.contains(b)
    };
    ids.iter()
        .filter(|n| g.state(n) != Some(NodeState::Completed))
        .filter(|n| ids.iter().filter(|m| reaches(m, n)).all(|m| g.state(m) == Some(NodeState::Completed)))
        .cloned()
        .collect()
}

#[test]
fn empty_scenario_is_rejected() {
    let err = Scenegraph::load(&doc(vec![], &[]), registry()).unwrap_err();
    assert_eq!(err, SceneError::Schema("scenario has no actions".into()));
}

#[test]
fn linear_frontier() {
    let g = Scenegraph::load(&doc(vec![question("A"), question("B"), question("C")], &[("A", "B"), ("B", "C")]), registry()).unwrap();
    assert_eq!(g.frontier(), set(&["A"]));
}

#[test]
fn diamond_frontier_matches_reachability_oracle() {
    let mut g = diamond();
    g.perform_action(&answer("A", 10)).unwrap();
    assert_eq!(g.frontier(), frontier_oracle(&g));
    assert_eq!(g.frontier(), set(&["B", "C"]));
}

#[test]
fn cycle_and_schema_errors() {
    let err = Scenegraph::load(&doc(vec![question("A"), question("B")], &[("A", "B"), ("B", "A")]), registry()).unwrap_err();
    assert!(matches!(&err, SceneError::Cycle(w) if w.first() == w.last() && w.len() == 3), "{err}");
    assert_eq!(err.exit_code(), 3);
    let dangling = Scenegraph::load(&doc(vec![question("A")], &[("A", "Z")]), registry()).unwrap_err();
    assert_eq!(dangling.exit_code(), 2);
    let unknown = doc(vec![json!({"id": "A", "prototype": "drill", "params": {}})], &[]);
    assert!(matches!(Scenegraph::load(&unknown, registry()), Err(SceneError::Schema(m)) if m.contains("unknown prototype")));
}

fn insert_doc(angle_tol: f64) -> ScenarioDocument {
    let target = Pose::new(Vec3::new(0.1, 0.2, 0.3), Quat::from_axis_angle(Vec3::Y, 0.5));
    doc(
        vec![json!({
            "id": "place", "prototype": "insert",
            "params": {"target": target, "angle_tolerance_deg": angle_tol},
            "scoring": [{"kind": "angle", "target": target.orientation, "max_deviation_deg": 10.0, "weight": 1.0}]
        })],
        &[],
    )
}

#[test]
fn insert_exact_completes() {
    let d = insert_doc(3.0);
    let mut g = Scenegraph::load(&d, registry()).unwrap();
    let target = Pose::new(Vec3::new(0.1, 0.2, 0.3), Quat::from_axis_angle(Vec3::Y, 0.5));
    let out = g
        .perform_action(&ActionEvent { node_id: "place".into(), timestamp_us: 5, payload: EventPayload::Insert { pose: target }, trajectory: vec![] })
        .unwrap();
    assert!(out.completed);
    assert!((out.action_score.unwrap() - 100.0).abs() < 1e-6);
}

#[test]
fn insert_four_degrees_off_is_rejected() {
    let mut g = Scenegraph::load(&insert_doc(3.0), registry()).unwrap();
    let off = Quat::from_axis_angle(Vec3::Y, 0.5) * Quat::from_axis_angle(Vec3::X, 4f64.to_radians());
    // oracle: angle between unit quaternions is 2·acos(|<q1,q2>|)
    let target = Quat::from_axis_angle(Vec3::Y, 0.5);
    let dot = (off.w * target.w + off.x * target.x + off.y * target.y + off.z * target.z).abs();
    assert!((2.0 * dot.min(1.0).acos()).to_degrees() > 3.0);
    let pose = Pose::new(Vec3::new(0.1, 0.2, 0.3), off);
    let out = g.perform_action(&ActionEvent { node_id: "place".into(), timestamp_us: 5, payload: EventPayload::Insert { pose }, trajectory: vec![] }).unwrap();
    assert!(!out.completed);
    assert!(out.message().starts_with("angle tolerance exceeded"), "{}", out.message());
    assert_eq!(g.state("place"), Some(NodeState::Active));
}

#[test]
fn wrong_answer_progresses_with_zero_score() {
    let mut g = Scenegraph::load(&doc(vec![question("Q"), question("N")], &[("Q", "N")]), registry()).unwrap();
    let ev = ActionEvent { node_id: "Q".into(), timestamp_us: 1, payload: EventPayload::Question { chosen: vec!["b".into()] }, trajectory: vec![] };
    let out = g.perform_action(&ev).unwrap();
    assert!(out.completed);
    assert_eq!(out.action_score, Some(0.0));
    assert_eq!(g.frontier(), set(&["N"]));
}

#[test]
fn ordering_and_payload_errors() {
    let mut g = Scenegraph::load(&doc(vec![question("A"), question("B")], &[("A", "B")]), registry()).unwrap();
    assert!(matches!(g.perform_action(&answer("B", 1)), Err(SceneError::Ordering(_))));
    let bad = ActionEvent { node_id: "A".into(), timestamp_us: 1, payload: EventPayload::Insert { pose: Pose::IDENTITY }, trajectory: vec![] };
    assert!(matches!(g.perform_action(&bad), Err(SceneError::Schema(_))));
}

#[test]
fn undo_examples() {
    let mut g = Scenegraph::load(&doc(vec![question("A"), question("B")], &[("A", "B")]), registry()).unwrap();
    g.perform_action(&answer("A", 1)).unwrap();
    g.perform_action(&answer("B", 2)).unwrap();
    assert!(matches!(g.undo_action("A"), Err(SceneError::Dependency(_))));
    g.undo_action("B").unwrap();
    assert_eq!(g.frontier(), set(&["B"]));

    let mut d = diamond();
    d.perform_action(&answer("A", 1)).unwrap();
    d.perform_action(&answer("B", 2)).unwrap();
    d.undo_action("B").unwrap();
    assert_eq!(d.frontier(), set(&["B", "C"]));
    assert_eq!(d.frontier(), frontier_oracle(&d));
}

fn rule(after: &str, actions: Vec<serde_json::Value>, edges: &[(&str, &str)]) -> AltPathRule {
    serde_json::from_value(json!({
        "trigger": {"on": "completed"},
        "fragment": {"actions": actions, "edges": edges},
        "splice_after": after
    }))
    .unwrap()
}

#[test]
fn splice_single_node() {
    let mut g = Scenegraph::load(&doc(vec![question("A"), question("B")], &[("A", "B")]), registry()).unwrap();
    g.splice_alt_path(&rule("A", vec![question("X")], &[])).unwrap();
    assert_eq!(g.edges(), vec![("A".to_string(), "X".to_string()), ("X".to_string(), "B".to_string())]);
}

#[test]
fn splice_collision_is_atomic() {
    let mut g = Scenegraph::load(&doc(vec![question("A"), question("B")], &[("A", "B")]), registry()).unwrap();
    let before = g.snapshot();
    assert!(matches!(g.splice_alt_path(&rule("A", vec![question("X"), question("B")], &[])), Err(SceneError::Schema(_))));
    assert_eq!(g.snapshot(), before);
}

#[test]
fn splice_back_edge_is_rejected() {
    let mut g = Scenegraph::load(&doc(vec![question("R"), question("A"), question("B")], &[("R", "A"), ("A", "B")]), registry()).unwrap();
    let before = g.snapshot();
    let err = g.splice_alt_path(&rule("A", vec![question("X")], &[("X", "R")])).unwrap_err();
    assert!(matches!(err, SceneError::Cycle(_)));
    assert_eq!(g.snapshot(), before);
}

#[test]
fn triggered_rule_fires_once() {
    let mut d = doc(vec![question("Q"), question("N")], &[("Q", "N")]);
    d.alt_paths = vec![serde_json::from_value(json!({
        "trigger": {"node": "Q", "on": "question_incorrect"},
        "fragment": {"actions": [question("R")]},
        "splice_after": "Q"
    }))
    .unwrap()];
    let mut g = Scenegraph::load(&d, registry()).unwrap();
    let wrong = ActionEvent { node_id: "Q".into(), timestamp_us: 3, payload: EventPayload::Question { chosen: vec!["b".into()] }, trajectory: vec![] };
    let out = g.perform_action(&wrong).unwrap();
    assert_eq!(out.spliced_rule, Some(0));
    assert_eq!(g.frontier(), set(&["R"]));
    g.perform_action(&answer("R", 4)).unwrap();
    assert_eq!(g.frontier(), set(&["N"]));
    let report = g.report("s", 0, 10, TotalMode::Mean).unwrap();
    assert_eq!(report.actions.iter().map(|a| a.action_id.as_str()).collect::<Vec<_>>(), vec!["Q", "R"]);
    assert_eq!(report.total_score, 50.0);
}

#[test]
fn scaffold_round_trips_through_validation() {
    let spec = scaffold_action("insert", &["Implant".into(), "femur".into()]).unwrap();
    assert_eq!(spec.id, "insert_implant_femur");
    assert!(spec.scoring.is_empty());
    let d = ScenarioDocument { version: 1, name: "s".into(), actions: vec![spec], edges: vec![], alt_paths: vec![] };
    Scenegraph::from_json(&d.to_json(), registry()).unwrap();
}

/// Independent cycle oracle: transitive closure by repeated squaring.
fn has_cycle_oracle(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut r = vec![vec![false; n]; n];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
            }
        }
    }
    (0..n).any(|i| r[i][i])
}

proptest! {
    #[test]
    fn load_detects_cycles_like_closure_oracle(edges in proptest::collection::vec((0usize..6, 0usize..6), 0..12)) {
        let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let names: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let e: Vec<(&str, &str)> = edges.iter().map(|&(a, b)| (names[a].as_str(), names[b].as_str())).collect();
        let d = doc(names.iter().map(|n| question(n)).collect(), &e);
        let loaded = Scenegraph::load(&d, registry());
        prop_assert_eq!(loaded.is_err(), has_cycle_oracle(6, &edges));
    }

    #[test]
    fn random_ops_keep_invariants(ops in proptest::collection::vec((0u8..4, 0usize..64), 1..120)) {
        let mut g = diamond();
        let mut completed_before = 0;
        let mut spliced = 0;
        for (t, (op, pick)) in ops.into_iter().enumerate() {
            let ids = g.node_ids().to_vec();
            let id = ids[pick % ids.len()].clone();
            let mut undone = false;
            match op {
                0 | 1 => { let _ = g.perform_action(&answer(&id, t as u64)); }
                2 => { undone = g.undo_action(&id).is_ok(); }
                _ => {
                    let target = ids[(pick / 2) % ids.len()].clone();
                    let r = rule(&id, vec![question(&format!("s{spliced}"))], &[(&format!("s{spliced}"), &target)]);
                    if g.splice_alt_path(&r).is_ok() { spliced += 1; }
                }
            }
            prop_assert!(g.check_invariants().is_ok(), "{:?}", g.check_invariants());
            prop_assert!(g.topological_order().is_some());
            let c = g.completed_count();
            prop_assert!(undone || c >= completed_before);
            completed_before = c;
            prop_assert_eq!(g.frontier(), frontier_oracle(&g));
        }
    }
}
