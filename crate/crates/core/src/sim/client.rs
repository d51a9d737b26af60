//! Scripted trainees: a deterministic policy that performs the scenario's
//! active Actions, optionally with injected mistakes.

use serde::{Deserialize, Serialize};

use crate::analytics::{FactorParams, Region};
use crate::geom::{Quat, Vec3};
use crate::scenegraph::document::Prototype;
use crate::scenegraph::{ActionEvent, ActionNode, EventPayload, MotionSample, Scenegraph};

/// A mistake applied to the first attempt at `node`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Injection {
    /// Wait this long after the Action becomes active (time-limit factors).
    Late { node: String, seconds: f64 },
    /// Rotate an Insert placement about +y (angle factors).
    WrongAngle { node: String, degrees: f64 },
    /// Route the hand through the Action's error-collider region.
    ContaminationTouch { node: String },
    /// Pick a wrong option (question factors, alt-path triggers).
    WrongAnswer { node: String },
}

impl Injection {
    pub fn node(&self) -> &str {
        match self {
            Injection::Late { node, .. } | Injection::WrongAngle { node, .. } | Injection::ContaminationTouch { node } | Injection::WrongAnswer { node } => {
                node
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedClient {
    pub id: u32,
    /// Object the client carries and publishes.
    pub object: u32,
    #[serde(default)]
    pub injections: Vec<Injection>,
}

/// Samples in an approach trajectory (10 Hz over one second).
const APPROACH_SAMPLES: usize = 11;
const APPROACH_OFFSET: Vec3 = Vec3::new(0.15, 0.10, 0.0);

impl ScriptedClient {
    fn injection(&self, node: &ActionNode) -> Vec<&Injection> {
        if node.attempts > 0 {
            return Vec::new();
        }
        self.injections.iter().filter(|i| i.node() == node.id).collect()
    }

    /// Whether the client is holding back on `node` at `now_us`.
    pub fn waiting(&self, node: &ActionNode, now_us: u64) -> bool {
        self.injection(node).iter().any(|i| match i {
            Injection::Late { seconds, .. } => now_us < node.activated_us.unwrap_or(0) + (seconds * 1e6).round() as u64,
            _ => false,
        })
    }

    /// Next Action to perform: the first active node in scenario order the
    /// client is not deliberately delaying.
    pub fn choose(&self, graph: &Scenegraph, now_us: u64) -> Option<String> {
        let frontier = graph.frontier();
        graph.node_ids().iter().filter(|id| frontier.contains(*id)).find(|id| graph.node(id).is_some_and(|n| !self.waiting(n, now_us))).cloned()
    }

    /// The event this client produces for `node` at `t_us`.
    pub fn act(&self, node: &ActionNode, t_us: u64) -> ActionEvent {
        let inj = self.injection(node);
        let angle = inj.iter().find_map(|i| match i {
            Injection::WrongAngle { degrees, .. } => Some(*degrees),
            _ => None,
        });
        let wrong_answer = inj.iter().any(|i| matches!(i, Injection::WrongAnswer { .. }));
        let contaminate = inj.iter().any(|i| matches!(i, Injection::ContaminationTouch { .. }));
        let t_s = t_us as f64 / 1e6;

        let (payload, goal) = match &node.prototype {
            Prototype::Insert(p) => {
                let mut pose = p.target;
                if let Some(d) = angle {
                    pose.orientation = (p.target.orientation * Quat::from_axis_angle(Vec3::Y, d.to_radians())).normalized();
                }
                (EventPayload::Insert { pose }, p.target.position)
            }
            Prototype::Remove(p) => (
                EventPayload::Remove { object: p.object.clone(), detached: true, displacement_m: p.clearance_m + 0.01 },
                self.home() + Vec3::new(0.0, p.clearance_m + 0.01, 0.0),
            ),
            Prototype::Use(p) => (
                EventPayload::Use { tool: p.tool.clone(), target: p.target.clone(), dwell_s: p.dwell_s, gesture_samples: p.gesture_samples.unwrap_or(0) },
                self.home(),
            ),
            Prototype::Question(q) => {
                let chosen = if wrong_answer { q.options.iter().find(|o| !q.correct.contains(o)).into_iter().cloned().collect() } else { q.correct.clone() };
                (EventPayload::Question { chosen }, self.home())
            }
        };
        let trajectory = match node.prototype {
            Prototype::Question(_) => Vec::new(),
            _ => {
                let detour = if contaminate { error_region_center(node) } else { None };
                approach(goal, detour, t_s)
            }
        };
        ActionEvent { node_id: node.id.clone(), timestamp_us: t_us, payload, trajectory }
    }

    fn home(&self) -> Vec3 {
        Vec3::new(0.3 * self.id as f64, 1.0, 0.0)
    }
}

fn error_region_center(node: &ActionNode) -> Option<Vec3> {
    node.spec.scoring.iter().find_map(|s| match &s.params {
        FactorParams::ErrorCollider { region: Region::Box { min, max }, .. } => Some((*min + *max) * 0.5),
        FactorParams::ErrorCollider { region: Region::Sphere { center, .. }, .. } => Some(*center),
        _ => None,
    })
}

/// Straight one-second approach ending at `goal` at `end_s`; with a detour,
/// the middle sample is replaced by the detour point.
fn approach(goal: Vec3, detour: Option<Vec3>, end_s: f64) -> Vec<MotionSample> {
    let start = goal + APPROACH_OFFSET;
    (0..APPROACH_SAMPLES)
        .map(|i| {
            let u = i as f64 / (APPROACH_SAMPLES - 1) as f64;
            let mut position = start.lerp(goal, u);
            if i == APPROACH_SAMPLES / 2 {
                if let Some(d) = detour {
                    position = d;
                }
            }
            MotionSample { t_s: end_s - 1.0 + u, position }
        })
        .collect()
}

impl std::str::FromStr for Injection {
    type Err = String;

    /// `late:<node>:<seconds>`, `wrong-angle:<node>:<degrees>`,
    /// `contamination:<node>` or `wrong-answer:<node>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: Option<&&str>| -> Result<f64, String> {
            v.ok_or_else(|| format!("'{s}' needs a numeric argument"))?.parse::<f64>().map_err(|e| format!("'{s}': {e}"))
        };
        let node = parts.get(1).filter(|n| !n.is_empty()).ok_or_else(|| format!("'{s}' names no node"))?.to_string();
        let inj = match parts[0] {
            "late" => Injection::Late { node, seconds: num(parts.get(2))? },
            "wrong-angle" => Injection::WrongAngle { node, degrees: num(parts.get(2))? },
            "contamination" => Injection::ContaminationTouch { node },
            "wrong-answer" => Injection::WrongAnswer { node },
            k => return Err(format!("unknown injection kind '{k}'")),
        };
        let expected = if matches!(inj, Injection::Late { .. } | Injection::WrongAngle { .. }) { 3 } else { 2 };
        if parts.len() != expected {
            return Err(format!("'{s}': expected {expected} ':'-separated fields"));
        }
        Ok(inj)
    }
}
