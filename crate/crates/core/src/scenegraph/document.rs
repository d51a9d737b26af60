//! Versioned JSON scenario document.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SceneError;
use crate::analytics::ScoringFactorSpec;
use crate::geom::Pose;

pub const SCENARIO_VERSION: u32 = 1;
pub const DEFAULT_POSITION_TOLERANCE_M: f64 = 5e-3;
pub const DEFAULT_ANGLE_TOLERANCE_DEG: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub actions: Vec<ActionSpec>,
    /// `[prerequisite, dependent]` pairs.
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub alt_paths: Vec<AltPathRule>,
}

/// One node as written in the document; `params` is checked against
/// `prototype` by [`ActionSpec::typed_prototype`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub id: String,
    pub prototype: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub scoring: Vec<ScoringFactorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_group: Option<String>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub target: Pose,
    #[serde(default = "default_pos_tol")]
    pub position_tolerance_m: f64,
    #[serde(default = "default_angle_tol")]
    pub angle_tolerance_deg: f64,
}

fn default_pos_tol() -> f64 {
    DEFAULT_POSITION_TOLERANCE_M
}

fn default_angle_tol() -> f64 {
    DEFAULT_ANGLE_TOLERANCE_DEG
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoveParams {
    pub object: String,
    pub clearance_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseParams {
    pub tool: String,
    pub target: String,
    pub dwell_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gesture_samples: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionParams {
    pub prompt: String,
    pub options: Vec<String>,
    pub correct: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prototype", content = "params", rename_all = "snake_case")]
pub enum Prototype {
    Insert(InsertParams),
    Remove(RemoveParams),
    Use(UseParams),
    Question(QuestionParams),
}

impl Prototype {
    pub fn name(&self) -> &'static str {
        match self {
            Prototype::Insert(_) => "insert",
            Prototype::Remove(_) => "remove",
            Prototype::Use(_) => "use",
            Prototype::Question(_) => "question",
        }
    }
}

impl ActionSpec {
    pub fn typed_prototype(&self) -> Result<Prototype, SceneError> {
        fn parse<T: serde::de::DeserializeOwned>(id: &str, v: &Value) -> Result<T, SceneError> {
            serde_json::from_value(v.clone()).map_err(|e| SceneError::Schema(format!("action '{id}': bad params: {e}")))
        }
        let p = match self.prototype.as_str() {
            "insert" => Prototype::Insert(parse(&self.id, &self.params)?),
            "remove" => Prototype::Remove(parse(&self.id, &self.params)?),
            "use" => Prototype::Use(parse(&self.id, &self.params)?),
            "question" => Prototype::Question(parse(&self.id, &self.params)?),
            other => return Err(SceneError::Schema(format!("action '{}': unknown prototype '{other}'", self.id))),
        };
        let bad = |m: &str| Err(SceneError::Schema(format!("action '{}': {m}", self.id)));
        match &p {
            Prototype::Insert(i) => {
                if !(i.position_tolerance_m > 0.0) || !(i.angle_tolerance_deg > 0.0) {
                    return bad("tolerances must be positive");
                }
                if (i.target.orientation.norm() - 1.0).abs() > 1e-4 {
                    return bad("target orientation is not a unit quaternion");
                }
            }
            Prototype::Remove(r) if !(r.clearance_m >= 0.0) => return bad("clearance must be non-negative"),
            Prototype::Use(u) if !(u.dwell_s >= 0.0) => return bad("dwell must be non-negative"),
            Prototype::Question(q) => {
                if q.options.is_empty() {
                    return bad("question has no options");
                }
                if let Some(c) = q.correct.iter().find(|c| !q.options.contains(c)) {
                    return bad(&format!("correct option '{c}' is not among the options"));
                }
            }
            _ => {}
        }
        if !(self.weight >= 0.0) {
            return bad("action weight must be non-negative");
        }
        Ok(p)
    }
}

/// A scenario fragment spliced in when `trigger` matches an event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AltPathRule {
    pub trigger: Trigger,
    pub fragment: Fragment,
    pub splice_after: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fragment {
    pub actions: Vec<ActionSpec>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

// no deny_unknown_fields here: serde does not support it alongside flatten
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    /// Restrict the rule to events for this node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(flatten)]
    pub condition: Condition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case")]
pub enum Condition {
    QuestionIncorrect,
    AngleErrorAbove {
        threshold_deg: f64,
    },
    PositionErrorAbove {
        threshold_m: f64,
    },
    DwellBelow {
        threshold_s: f64,
    },
    /// Any completed event.
    Completed,
    /// Any event that failed its completion check.
    Rejected,
}

impl ScenarioDocument {
    pub fn from_json(s: &str) -> Result<Self, SceneError> {
        let doc: ScenarioDocument = serde_json::from_str(s).map_err(|e| SceneError::Schema(e.to_string()))?;
        if doc.version != SCENARIO_VERSION {
            return Err(SceneError::Schema(format!("unsupported scenario version {}", doc.version)));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }
}

/// Skeleton node for `scaffold-action`: prototype params filled with
/// placeholders derived from the object names, empty scoring list.
pub fn scaffold_action(prototype: &str, objects: &[String]) -> Result<ActionSpec, SceneError> {
    let first = objects.first().cloned().unwrap_or_else(|| "object".into());
    let second = objects.get(1).cloned().unwrap_or_else(|| "target".into());
    let params = match prototype {
        "insert" => serde_json::to_value(InsertParams {
            object: Some(first.clone()),
            target: Pose::IDENTITY,
            position_tolerance_m: DEFAULT_POSITION_TOLERANCE_M,
            angle_tolerance_deg: DEFAULT_ANGLE_TOLERANCE_DEG,
        }),
        "remove" => serde_json::to_value(RemoveParams { object: first.clone(), clearance_m: 0.05 }),
        "use" => serde_json::to_value(UseParams { tool: first.clone(), target: second.clone(), dwell_s: 1.0, gesture_samples: None }),
        "question" => serde_json::to_value(QuestionParams {
            prompt: format!("Which step comes next for {first}?"),
            options: vec!["a".into(), "b".into()],
            correct: vec!["a".into()],
        }),
        other => return Err(SceneError::Schema(format!("unknown prototype '{other}'"))),
    }
    .expect("params serialize");
    let id: String = std::iter::once(prototype.to_string())
        .chain(objects.iter().cloned())
        .collect::<Vec<_>>()
        .join("_")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    Ok(ActionSpec { id, prototype: prototype.into(), params, scoring: Vec::new(), parallel_group: None, weight: 1.0 })
}
