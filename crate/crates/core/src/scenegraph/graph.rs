use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::document::{ActionSpec, AltPathRule, Condition, Prototype, ScenarioDocument};
use super::SceneError;
use crate::analytics::{ActionReport, FactorParams, FactorRegistry, FactorScore, FactorState, Sample, ScoringFactorSpec, SessionReport, TotalMode};
use crate::geom::{Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    Pending,
    Active,
    Completed,
    Undone,
}

#[derive(Clone, Debug)]
pub struct ActionNode {
    pub id: String,
    pub prototype: Prototype,
    pub spec: ActionSpec,
    pub factors: Vec<FactorState>,
    pub state: NodeState,
    pub activated_us: Option<u64>,
    pub completed_us: Option<u64>,
    pub attempts: u32,
    /// Index of the alt-path rule that inserted this node.
    pub spliced_by: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub t_s: f64,
    pub position: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    Insert { pose: Pose },
    Remove { object: String, detached: bool, displacement_m: f64 },
    Use { tool: String, target: String, dwell_s: f64, gesture_samples: u32 },
    Question { chosen: Vec<String> },
}

impl EventPayload {
    fn prototype_name(&self) -> &'static str {
        match self {
            EventPayload::Insert { .. } => "insert",
            EventPayload::Remove { .. } => "remove",
            EventPayload::Use { .. } => "use",
            EventPayload::Question { .. } => "question",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub node_id: String,
    pub timestamp_us: u64,
    pub payload: EventPayload,
    /// Object track while the Action was performed (feeds motion factors).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<MotionSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    PositionTolerance { error_m: f64, tolerance_m: f64 },
    AngleTolerance { error_deg: f64, tolerance_deg: f64 },
    WrongObject { expected: String, got: String },
    NotDetached,
    InsufficientClearance { displacement_m: f64, clearance_m: f64 },
    WrongTool { expected: String, got: String },
    WrongTarget { expected: String, got: String },
    InsufficientDwell { dwell_s: f64, required_s: f64 },
    MissingGestures { samples: u32, required: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PositionTolerance { error_m, tolerance_m } => {
                write!(f, "position tolerance exceeded: {:.2} mm > {:.2} mm", error_m * 1e3, tolerance_m * 1e3)
            }
            Violation::AngleTolerance { error_deg, tolerance_deg } => {
                write!(f, "angle tolerance exceeded: {error_deg:.3}° > {tolerance_deg:.3}°")
            }
            Violation::WrongObject { expected, got } => write!(f, "wrong object: expected {expected}, got {got}"),
            Violation::NotDetached => write!(f, "object not detached"),
            Violation::InsufficientClearance { displacement_m, clearance_m } => {
                write!(f, "clearance not reached: {displacement_m:.4} m < {clearance_m:.4} m")
            }
            Violation::WrongTool { expected, got } => write!(f, "wrong tool: expected {expected}, got {got}"),
            Violation::WrongTarget { expected, got } => write!(f, "wrong target: expected {expected}, got {got}"),
            Violation::InsufficientDwell { dwell_s, required_s } => {
                write!(f, "dwell too short: {dwell_s:.3} s < {required_s:.3} s")
            }
            Violation::MissingGestures { samples, required } => {
                write!(f, "too few gesture samples: {samples} < {required}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionOutcome {
    pub node_id: String,
    pub completed: bool,
    pub violation: Option<Violation>,
    pub factors: Vec<FactorScore>,
    pub action_score: Option<f64>,
    pub spliced_rule: Option<usize>,
    pub splice_error: Option<String>,
}

impl ActionOutcome {
    pub fn message(&self) -> String {
        match (&self.violation, self.completed) {
            (_, true) => format!("{} completed", self.node_id),
            (Some(v), false) => v.to_string(),
            (None, false) => format!("{} not completed", self.node_id),
        }
    }
}

/// Values of one event that alt-path triggers test against.
#[derive(Clone, Debug, Default)]
struct EventMetrics {
    completed: bool,
    angle_error_deg: Option<f64>,
    position_error_m: Option<f64>,
    question_correct: Option<bool>,
    dwell_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Scenegraph {
    name: String,
    registry: Arc<FactorRegistry>,
    nodes: BTreeMap<String, ActionNode>,
    /// Insertion order; drives deterministic iteration and report ordering.
    order: Vec<String>,
    succs: BTreeMap<String, BTreeSet<String>>,
    preds: BTreeMap<String, BTreeSet<String>>,
    rules: Vec<AltPathRule>,
    fired: Vec<bool>,
    now_us: u64,
}

fn build_node(spec: &ActionSpec, registry: &FactorRegistry, spliced_by: Option<usize>) -> Result<ActionNode, SceneError> {
    if spec.id.is_empty() {
        return Err(SceneError::Schema("action with empty id".into()));
    }
    let prototype = spec.typed_prototype()?;
    let mut specs = spec.scoring.clone();
    if matches!(prototype, Prototype::Question(_)) && !specs.iter().any(|s| s.params == FactorParams::Question) {
        specs.push(ScoringFactorSpec::new(FactorParams::Question, 1.0));
    }
    let factors =
        specs.iter().map(|s| registry.instantiate(s)).collect::<Result<Vec<_>, _>>().map_err(|e| SceneError::Schema(format!("action '{}': {e}", spec.id)))?;
    Ok(ActionNode {
        id: spec.id.clone(),
        prototype,
        spec: spec.clone(),
        factors,
        state: NodeState::Pending,
        activated_us: None,
        completed_us: None,
        attempts: 0,
        spliced_by,
    })
}

impl Scenegraph {
    pub fn load(doc: &ScenarioDocument, registry: Arc<FactorRegistry>) -> Result<Self, SceneError> {
        if doc.actions.is_empty() {
            return Err(SceneError::Schema("scenario has no actions".into()));
        }
        let mut g = Scenegraph {
            name: doc.name.clone(),
            registry,
            nodes: BTreeMap::new(),
            order: Vec::new(),
            succs: BTreeMap::new(),
            preds: BTreeMap::new(),
            rules: doc.alt_paths.clone(),
            fired: vec![false; doc.alt_paths.len()],
            now_us: 0,
        };
        for spec in &doc.actions {
            if g.nodes.contains_key(&spec.id) {
                return Err(SceneError::Schema(format!("duplicate action id '{}'", spec.id)));
            }
            let node = build_node(spec, &g.registry, None)?;
            g.insert_node(node);
        }
        for (a, b) in &doc.edges {
            g.add_edge_checked(a, b)?;
        }
        g.validate_rules()?;
        if let Some(cycle) = g.find_cycle() {
            return Err(SceneError::Cycle(cycle));
        }
        g.refresh_frontier();
        Ok(g)
    }

    pub fn from_json(s: &str, registry: Arc<FactorRegistry>) -> Result<Self, SceneError> {
        Scenegraph::load(&ScenarioDocument::from_json(s)?, registry)
    }

    fn validate_rules(&self) -> Result<(), SceneError> {
        let mut all: BTreeSet<&str> = self.nodes.keys().map(String::as_str).collect();
        for (i, rule) in self.rules.iter().enumerate() {
            for spec in &rule.fragment.actions {
                if !all.insert(&spec.id) {
                    return Err(SceneError::Schema(format!("alt path {i}: action id '{}' already used", spec.id)));
                }
                build_node(spec, &self.registry, Some(i))?;
            }
        }
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.fragment.actions.is_empty() {
                return Err(SceneError::Schema(format!("alt path {i}: empty fragment")));
            }
            if !all.contains(rule.splice_after.as_str()) {
                return Err(SceneError::Schema(format!("alt path {i}: splice_after '{}' is unknown", rule.splice_after)));
            }
            if let Some(n) = &rule.trigger.node {
                if !all.contains(n.as_str()) {
                    return Err(SceneError::Schema(format!("alt path {i}: trigger node '{n}' is unknown")));
                }
            }
            for (a, b) in &rule.fragment.edges {
                for end in [a, b] {
                    if !all.contains(end.as_str()) {
                        return Err(SceneError::Schema(format!("alt path {i}: dangling edge endpoint '{end}'")));
                    }
                }
            }
        }
        Ok(())
    }

    fn insert_node(&mut self, node: ActionNode) {
        self.order.push(node.id.clone());
        self.succs.insert(node.id.clone(), BTreeSet::new());
        self.preds.insert(node.id.clone(), BTreeSet::new());
        self.nodes.insert(node.id.clone(), node);
    }

    fn add_edge_checked(&mut self, a: &str, b: &str) -> Result<(), SceneError> {
        for end in [a, b] {
            if !self.nodes.contains_key(end) {
                return Err(SceneError::Schema(format!("dangling edge {a} -> {b}: unknown action '{end}'")));
            }
        }
        if a == b {
            return Err(SceneError::Cycle(vec![a.to_owned(), a.to_owned()]));
        }
        self.succs.get_mut(a).expect("node").insert(b.to_owned());
        self.preds.get_mut(b).expect("node").insert(a.to_owned());
        Ok(())
    }

    fn remove_edge(&mut self, a: &str, b: &str) {
        self.succs.get_mut(a).expect("node").remove(b);
        self.preds.get_mut(b).expect("node").remove(a);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node(&self, id: &str) -> Option<&ActionNode> {
        self.nodes.get(id)
    }

    pub fn state(&self, id: &str) -> Option<NodeState> {
        self.nodes.get(id).map(|n| n.state)
    }

    /// Node ids in insertion order.
    pub fn node_ids(&self) -> &[String] {
        &self.order
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        self.succs.iter().flat_map(|(a, bs)| bs.iter().map(move |b| (a.clone(), b.clone()))).collect()
    }

    pub fn predecessors(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.preds.get(id)
    }

    pub fn successors(&self, id: &str) -> Option<&BTreeSet<String>> {
        self.succs.get(id)
    }

    pub fn rules(&self) -> &[AltPathRule] {
        &self.rules
    }

    pub fn frontier(&self) -> BTreeSet<String> {
        self.nodes.values().filter(|n| n.state == NodeState::Active).map(|n| n.id.clone()).collect()
    }

    pub fn completed_count(&self) -> usize {
        self.nodes.values().filter(|n| n.state == NodeState::Completed).count()
    }

    pub fn is_finished(&self) -> bool {
        self.nodes.values().all(|n| n.state == NodeState::Completed)
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let mut indeg: BTreeMap<&str, usize> = self.preds.iter().map(|(k, v)| (k.as_str(), v.len())).collect();
        let mut ready: VecDeque<&str> = self.order.iter().map(String::as_str).filter(|id| indeg[id] == 0).collect();
        let mut out = Vec::with_capacity(self.order.len());
        while let Some(id) = ready.pop_front() {
            out.push(id.to_owned());
            for s in &self.succs[id] {
                let d = indeg.get_mut(s.as_str()).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(s);
                }
            }
        }
        (out.len() == self.order.len()).then_some(out)
    }

    /// A cycle as a node path whose last element repeats the first.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut mark: BTreeMap<&str, Mark> = self.order.iter().map(|id| (id.as_str(), Mark::New)).collect();
        for root in &self.order {
            if mark[root.as_str()] != Mark::New {
                continue;
            }
            // iterative DFS keeping the current path
            let mut path: Vec<&str> = vec![root];
            let mut iters: Vec<std::collections::btree_set::Iter<'_, String>> = vec![self.succs[root].iter()];
            mark.insert(root, Mark::Open);
            while let Some(it) = iters.last_mut() {
                match it.next() {
                    Some(next) => match mark[next.as_str()] {
                        Mark::New => {
                            mark.insert(next, Mark::Open);
                            path.push(next);
                            iters.push(self.succs[next].iter());
                        }
                        Mark::Open => {
                            let start = path.iter().position(|p| *p == next).expect("open node on path");
                            let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                            cycle.push(next.clone());
                            return Some(cycle);
                        }
                        Mark::Done => {}
                    },
                    None => {
                        mark.insert(path.pop().expect("path"), Mark::Done);
                        iters.pop();
                    }
                }
            }
        }
        None
    }

    fn refresh_frontier(&mut self) {
        let now = self.now_us;
        for id in &self.order {
            let ready = self.preds[id].iter().all(|p| self.nodes[p].state == NodeState::Completed);
            let node = self.nodes.get_mut(id).expect("node");
            match node.state {
                NodeState::Pending if ready => {
                    node.state = NodeState::Active;
                    node.activated_us = Some(now);
                }
                NodeState::Active if !ready => {
                    node.state = NodeState::Pending;
                    node.activated_us = None;
                }
                _ => {}
            }
        }
    }

    fn completed_with_open_prerequisite(&self) -> Option<(String, String)> {
        self.nodes
            .values()
            .filter(|n| n.state == NodeState::Completed)
            .find_map(|n| self.preds[&n.id].iter().find(|p| self.nodes[*p].state != NodeState::Completed).map(|p| (p.clone(), n.id.clone())))
    }

    /// Acyclicity plus frontier soundness; `Err` describes the first breach.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(c) = self.find_cycle() {
            return Err(format!("cycle {}", c.join(" -> ")));
        }
        if let Some((p, n)) = self.completed_with_open_prerequisite() {
            return Err(format!("{n} completed before its prerequisite {p}"));
        }
        for n in self.nodes.values() {
            let ready = self.preds[&n.id].iter().all(|p| self.nodes[p].state == NodeState::Completed);
            if n.state == NodeState::Active && !ready {
                return Err(format!("{} active with incomplete prerequisites", n.id));
            }
            if n.state == NodeState::Pending && ready {
                return Err(format!("{} pending although ready", n.id));
            }
            if n.state == NodeState::Undone {
                return Err(format!("{} left in transient Undone state", n.id));
            }
        }
        Ok(())
    }

    pub fn perform_action(&mut self, ev: &ActionEvent) -> Result<ActionOutcome, SceneError> {
        let node = self.nodes.get(&ev.node_id).ok_or_else(|| SceneError::Ordering(format!("event for unknown action '{}'", ev.node_id)))?;
        if node.state != NodeState::Active {
            return Err(SceneError::Ordering(format!("action '{}' is {:?}, not Active", ev.node_id, node.state)));
        }
        if ev.payload.prototype_name() != node.prototype.name() {
            return Err(SceneError::Schema(format!(
                "action '{}' expects a {} payload, got {}",
                ev.node_id,
                node.prototype.name(),
                ev.payload.prototype_name()
            )));
        }
        if let Some(w) = ev.trajectory.windows(2).find(|w| w[1].t_s < w[0].t_s) {
            return Err(SceneError::Schema(format!("trajectory time goes backwards at t={}", w[1].t_s)));
        }
        self.now_us = self.now_us.max(ev.timestamp_us);
        let (violation, metrics, samples) = evaluate(&node.prototype, ev);

        let node = self.nodes.get_mut(&ev.node_id).expect("checked");
        node.attempts += 1;
        for s in &samples {
            for f in node.factors.iter_mut().filter(|f| f.accepts(s)) {
                f.update(s).map_err(|e| SceneError::Schema(e.to_string()))?;
            }
        }
        let mut outcome = ActionOutcome {
            node_id: ev.node_id.clone(),
            completed: violation.is_none(),
            violation,
            factors: Vec::new(),
            action_score: None,
            spliced_rule: None,
            splice_error: None,
        };
        if outcome.completed {
            let elapsed_s = ev.timestamp_us.saturating_sub(node.activated_us.unwrap_or(0)) as f64 / 1e6;
            let timing = Sample::Timing { elapsed_s };
            for f in node.factors.iter_mut().filter(|f| f.accepts(&timing)) {
                f.update(&timing).map_err(|e| SceneError::Schema(e.to_string()))?;
            }
            outcome.factors = node.factors.iter_mut().map(FactorState::finalize).collect();
            outcome.action_score = Some(action_report(node)?.score);
            node.state = NodeState::Completed;
            node.completed_us = Some(ev.timestamp_us);
            self.refresh_frontier();
        }

        let metrics = EventMetrics { completed: outcome.completed, ..metrics };
        let hit = self
            .rules
            .iter()
            .enumerate()
            .find(|(i, r)| !self.fired[*i] && r.trigger.node.as_ref().is_none_or(|n| *n == ev.node_id) && matches(&r.trigger.condition, &metrics));
        if let Some((i, rule)) = hit {
            let rule = rule.clone();
            self.fired[i] = true;
            match self.splice_rule(&rule, Some(i)) {
                Ok(()) => outcome.spliced_rule = Some(i),
                Err(e) => {
                    log::warn!("alt path {i} not spliced: {e}");
                    outcome.splice_error = Some(e.to_string());
                }
            }
        }
        Ok(outcome)
    }

    pub fn undo_action(&mut self, node_id: &str) -> Result<(), SceneError> {
        let node = self.nodes.get(node_id).ok_or_else(|| SceneError::Ordering(format!("unknown action '{node_id}'")))?;
        if node.state != NodeState::Completed {
            return Err(SceneError::Ordering(format!("action '{node_id}' is {:?}, not Completed", node.state)));
        }
        if let Some(s) = self.succs[node_id].iter().find(|s| self.nodes[*s].state == NodeState::Completed) {
            return Err(SceneError::Dependency(format!("cannot undo '{node_id}': successor '{s}' is completed")));
        }
        let registry = self.registry.clone();
        let node = self.nodes.get_mut(node_id).expect("checked");
        node.state = NodeState::Undone;
        node.factors = node.factors.iter().map(|f| registry.instantiate(&f.spec)).collect::<Result<_, _>>().map_err(|e| SceneError::Schema(e.to_string()))?;
        node.completed_us = None;
        node.state = NodeState::Active;
        for s in self.succs[node_id].clone() {
            let n = self.nodes.get_mut(&s).expect("node");
            if n.state == NodeState::Active {
                n.state = NodeState::Pending;
                n.activated_us = None;
            }
        }
        self.refresh_frontier();
        Ok(())
    }

    /// Splice `rule`'s fragment after `rule.splice_after`. Atomic: on error
    /// the graph is unchanged.
    pub fn splice_alt_path(&mut self, rule: &AltPathRule) -> Result<(), SceneError> {
        self.splice_rule(rule, None)
    }

    fn splice_rule(&mut self, rule: &AltPathRule, index: Option<usize>) -> Result<(), SceneError> {
        let after = rule.splice_after.as_str();
        if !self.nodes.contains_key(after) {
            return Err(SceneError::Schema(format!("splice_after '{after}' does not exist")));
        }
        if rule.fragment.actions.is_empty() {
            return Err(SceneError::Schema("empty fragment".into()));
        }
        let mut next = self.clone();
        let mut frag: BTreeSet<String> = BTreeSet::new();
        for spec in &rule.fragment.actions {
            if next.nodes.contains_key(&spec.id) {
                return Err(SceneError::Schema(format!("fragment action id '{}' collides with an existing action", spec.id)));
            }
            next.insert_node(build_node(spec, &next.registry, index)?);
            frag.insert(spec.id.clone());
        }
        for (a, b) in &rule.fragment.edges {
            next.add_edge_checked(a, b)?;
        }
        let internal = |a: &String, b: &String| frag.contains(a) && frag.contains(b);
        let entries: Vec<String> = frag.iter().filter(|f| !rule.fragment.edges.iter().any(|(a, b)| b == *f && internal(a, b))).cloned().collect();
        let exits: Vec<String> = frag.iter().filter(|f| !rule.fragment.edges.iter().any(|(a, b)| a == *f && internal(a, b))).cloned().collect();
        let previous: Vec<String> = next.succs[after].iter().filter(|s| !frag.contains(*s)).cloned().collect();
        for s in &previous {
            next.remove_edge(after, s);
        }
        for e in &entries {
            next.add_edge_checked(after, e)?;
        }
        for x in &exits {
            for s in &previous {
                next.add_edge_checked(x, s)?;
            }
        }
        if let Some(cycle) = next.find_cycle() {
            return Err(SceneError::Cycle(cycle));
        }
        if let Some((p, n)) = next.completed_with_open_prerequisite() {
            return Err(SceneError::Dependency(format!("splice would make '{p}' a prerequisite of completed '{n}'")));
        }
        next.refresh_frontier();
        *self = next;
        Ok(())
    }

    pub fn action_reports(&self) -> Result<Vec<ActionReport>, SceneError> {
        self.order.iter().map(|id| &self.nodes[id]).filter(|n| n.state == NodeState::Completed).map(action_report).collect()
    }

    pub fn report(&self, session_id: &str, started_us: u64, finished_us: u64, mode: TotalMode) -> Result<SessionReport, SceneError> {
        SessionReport::new(session_id, self.name.clone(), started_us, finished_us, mode, self.action_reports()?).map_err(|e| SceneError::Schema(e.to_string()))
    }

    /// Canonical dump of the full mutable state; equal strings mean equal graphs.
    pub fn snapshot(&self) -> Value {
        let nodes: Vec<Value> = self
            .order
            .iter()
            .map(|id| {
                let n = &self.nodes[id];
                json!({
                    "id": n.id,
                    "state": n.state,
                    "activated_us": n.activated_us,
                    "completed_us": n.completed_us,
                    "attempts": n.attempts,
                    "spliced_by": n.spliced_by,
                    "factors": n.factors.iter().map(FactorState::state_json).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({ "nodes": nodes, "edges": self.edges(), "fired": self.fired, "now_us": self.now_us })
    }
}

fn action_report(n: &ActionNode) -> Result<ActionReport, SceneError> {
    let factors: Vec<FactorScore> = n.factors.iter().map(|f| f.finalized().cloned().unwrap_or_else(|| f.current_score())).collect();
    ActionReport::new(n.id.clone(), n.spec.weight, n.activated_us.unwrap_or(0), n.completed_us.unwrap_or(0), n.attempts, factors)
        .map_err(|e| SceneError::Schema(format!("action '{}': {e}", n.id)))
}

fn matches(c: &Condition, m: &EventMetrics) -> bool {
    match c {
        Condition::QuestionIncorrect => m.question_correct == Some(false),
        Condition::AngleErrorAbove { threshold_deg } => m.angle_error_deg.is_some_and(|e| e > *threshold_deg),
        Condition::PositionErrorAbove { threshold_m } => m.position_error_m.is_some_and(|e| e > *threshold_m),
        Condition::DwellBelow { threshold_s } => m.dwell_s.is_some_and(|d| d < *threshold_s),
        Condition::Completed => m.completed,
        Condition::Rejected => !m.completed,
    }
}

/// Completion check, trigger metrics and factor samples for one event.
fn evaluate(p: &Prototype, ev: &ActionEvent) -> (Option<Violation>, EventMetrics, Vec<Sample>) {
    let mut m = EventMetrics::default();
    let mut samples: Vec<Sample> = ev.trajectory.iter().map(|s| Sample::Motion { t_s: s.t_s, position: s.position }).collect();
    let violation = match (p, &ev.payload) {
        (Prototype::Insert(i), EventPayload::Insert { pose }) => {
            let pos_err = pose.position.distance(i.target.position);
            let ang_err = pose.orientation.normalized().angle_to(i.target.orientation).to_degrees();
            m.position_error_m = Some(pos_err);
            m.angle_error_deg = Some(ang_err);
            samples.push(Sample::Placement { orientation: pose.orientation });
            if pos_err > i.position_tolerance_m {
                Some(Violation::PositionTolerance { error_m: pos_err, tolerance_m: i.position_tolerance_m })
            } else if ang_err > i.angle_tolerance_deg {
                Some(Violation::AngleTolerance { error_deg: ang_err, tolerance_deg: i.angle_tolerance_deg })
            } else {
                None
            }
        }
        (Prototype::Remove(r), EventPayload::Remove { object, detached, displacement_m }) => {
            if *object != r.object {
                Some(Violation::WrongObject { expected: r.object.clone(), got: object.clone() })
            } else if !detached {
                Some(Violation::NotDetached)
            } else if *displacement_m < r.clearance_m {
                Some(Violation::InsufficientClearance { displacement_m: *displacement_m, clearance_m: r.clearance_m })
            } else {
                None
            }
        }
        (Prototype::Use(u), EventPayload::Use { tool, target, dwell_s, gesture_samples }) => {
            m.dwell_s = Some(*dwell_s);
            if *tool != u.tool {
                Some(Violation::WrongTool { expected: u.tool.clone(), got: tool.clone() })
            } else if *target != u.target {
                Some(Violation::WrongTarget { expected: u.target.clone(), got: target.clone() })
            } else if *dwell_s < u.dwell_s {
                Some(Violation::InsufficientDwell { dwell_s: *dwell_s, required_s: u.dwell_s })
            } else if u.gesture_samples.is_some_and(|req| *gesture_samples < req) {
                Some(Violation::MissingGestures { samples: *gesture_samples, required: u.gesture_samples.unwrap_or(0) })
            } else {
                None
            }
        }
        (Prototype::Question(q), EventPayload::Question { chosen }) => {
            let chosen: BTreeSet<String> = chosen.iter().cloned().collect();
            let correct: BTreeSet<String> = q.correct.iter().cloned().collect();
            m.question_correct = Some(chosen == correct);
            samples.push(Sample::Answer { chosen, correct });
            None
        }
        _ => unreachable!("payload kind checked by caller"),
    };
    (violation, m, samples)
}
