//! Scoring factors: per-Action assessment components producing a score in [0, 100].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::AnalyticsError;
use crate::geom::{Quat, Vec3};

pub const MAX_SCORE: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Box { min: Vec3, max: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

impl Region {
    pub fn contains(&self, p: Vec3) -> bool {
        match self {
            Region::Box { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z,
            Region::Sphere { center, radius } => p.distance(*center) <= *radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorParams {
    Velocity {
        v_max: f64,
    },
    ErrorCollider {
        penalty: f64,
        region: Region,
    },
    Angle {
        target: Quat,
        max_deviation_deg: f64,
    },
    /// Correctness of a Question action's chosen option set.
    Question,
    Custom {
        id: String,
        #[serde(default)]
        params: Value,
    },
}

impl FactorParams {
    pub fn kind_name(&self) -> &str {
        match self {
            FactorParams::Velocity { .. } => "velocity",
            FactorParams::ErrorCollider { .. } => "error_collider",
            FactorParams::Angle { .. } => "angle",
            FactorParams::Question => "question",
            FactorParams::Custom { id, .. } => id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringFactorSpec {
    #[serde(flatten)]
    pub params: FactorParams,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl ScoringFactorSpec {
    pub fn new(params: FactorParams, weight: f64) -> Self {
        ScoringFactorSpec { params, weight }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let bad = |m: String| Err(AnalyticsError::Schema(m));
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return bad(format!("factor weight must be a non-negative number, got {}", self.weight));
        }
        match &self.params {
            FactorParams::Velocity { v_max } if !(*v_max > 0.0) => bad(format!("velocity v_max must be > 0, got {v_max}")),
            FactorParams::ErrorCollider { penalty, region } => {
                if !(*penalty >= 0.0) {
                    return bad(format!("error collider penalty must be >= 0, got {penalty}"));
                }
                match region {
                    Region::Box { min, max } if min.x > max.x || min.y > max.y || min.z > max.z => bad("error region box has min > max".into()),
                    Region::Sphere { radius, .. } if !(*radius > 0.0) => bad("error region sphere radius must be > 0".into()),
                    _ => Ok(()),
                }
            }
            FactorParams::Angle { target, max_deviation_deg } => {
                if !(*max_deviation_deg > 0.0) {
                    return bad(format!("angle max_deviation_deg must be > 0, got {max_deviation_deg}"));
                }
                if (target.norm() - 1.0).abs() > 1e-4 {
                    return bad("angle target orientation is not a unit quaternion".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Evidence fed to factors while an Action is being performed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sample", rename_all = "snake_case")]
pub enum Sample {
    /// Tracked object position at time `t_s`.
    Motion {
        t_s: f64,
        position: Vec3,
    },
    /// Final orientation of a placed object.
    Placement {
        orientation: Quat,
    },
    Answer {
        chosen: BTreeSet<String>,
        correct: BTreeSet<String>,
    },
    /// Seconds between an Action becoming active and its completion.
    Timing {
        elapsed_s: f64,
    },
}

/// User-provided factor behavior, resolved by name at load time.
pub trait CustomFactor: fmt::Debug + Send + Sync {
    fn accepts(&self, sample: &Sample) -> bool;
    fn update(&mut self, sample: &Sample);
    /// `None` when no sample has been seen.
    fn score(&self) -> Option<f64>;
    fn state(&self) -> Value;
    fn boxed_clone(&self) -> Box<dyn CustomFactor>;
}

impl Clone for Box<dyn CustomFactor> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

pub type CustomFactorCtor = fn(&Value) -> Result<Box<dyn CustomFactor>, AnalyticsError>;

#[derive(Clone)]
pub struct FactorRegistry {
    ctors: BTreeMap<String, CustomFactorCtor>,
}

impl fmt::Debug for FactorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.ctors.keys()).finish()
    }
}

impl Default for FactorRegistry {
    fn default() -> Self {
        let mut r = FactorRegistry::empty();
        r.register("time_limit", TimeLimit::create);
        r
    }
}

impl FactorRegistry {
    pub fn empty() -> Self {
        FactorRegistry { ctors: BTreeMap::new() }
    }

    pub fn register(&mut self, id: &str, ctor: CustomFactorCtor) {
        self.ctors.insert(id.to_owned(), ctor);
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ctors.contains_key(id)
    }

    pub fn shared(self) -> Arc<FactorRegistry> {
        Arc::new(self)
    }

    pub fn instantiate(&self, spec: &ScoringFactorSpec) -> Result<FactorState, AnalyticsError> {
        spec.validate()?;
        let data = match &spec.params {
            FactorParams::Velocity { .. } => FactorData::Velocity { last: None, excess_s: 0.0, total_s: 0.0 },
            FactorParams::ErrorCollider { .. } => FactorData::ErrorCollider { inside: false, entries: 0, samples: 0 },
            FactorParams::Angle { .. } => FactorData::Angle { deviation_deg: None },
            FactorParams::Question => FactorData::Question { correct: None },
            FactorParams::Custom { id, params } => {
                let ctor = self.ctors.get(id).ok_or_else(|| AnalyticsError::Schema(format!("unknown custom scoring factor '{id}'")))?;
                FactorData::Custom(ctor(params)?)
            }
        };
        Ok(FactorState { spec: spec.clone(), data, finalized: None })
    }
}

#[derive(Clone, Debug)]
enum FactorData {
    Velocity { last: Option<(f64, Vec3)>, excess_s: f64, total_s: f64 },
    ErrorCollider { inside: bool, entries: u32, samples: u32 },
    Angle { deviation_deg: Option<f64> },
    Question { correct: Option<bool> },
    Custom(Box<dyn CustomFactor>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorScore {
    pub kind: String,
    pub weight: f64,
    pub score: f64,
    /// Set when the factor never received a sample (score defaults to 100).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_data: bool,
}

/// Accumulated samples for one factor of one Action.
#[derive(Clone, Debug)]
pub struct FactorState {
    pub spec: ScoringFactorSpec,
    data: FactorData,
    finalized: Option<FactorScore>,
}

impl FactorState {
    pub fn is_finalized(&self) -> bool {
        self.finalized.is_some()
    }

    pub fn finalized(&self) -> Option<&FactorScore> {
        self.finalized.as_ref()
    }

    /// Whether this factor consumes `sample`.
    pub fn accepts(&self, sample: &Sample) -> bool {
        match (&self.data, sample) {
            (FactorData::Velocity { .. }, Sample::Motion { .. })
            | (FactorData::ErrorCollider { .. }, Sample::Motion { .. })
            | (FactorData::Angle { .. }, Sample::Placement { .. })
            | (FactorData::Question { .. }, Sample::Answer { .. }) => true,
            (FactorData::Custom(c), s) => c.accepts(s),
            _ => false,
        }
    }

    pub fn update(&mut self, sample: &Sample) -> Result<(), AnalyticsError> {
        if self.finalized.is_some() {
            return Err(AnalyticsError::Finalized(self.spec.params.kind_name().to_owned()));
        }
        if !self.accepts(sample) {
            return Err(AnalyticsError::Schema(format!("{} factor cannot take a {} sample", self.spec.params.kind_name(), sample_name(sample))));
        }
        match (&mut self.data, sample, &self.spec.params) {
            (FactorData::Velocity { last, excess_s, total_s }, Sample::Motion { t_s, position }, FactorParams::Velocity { v_max }) => {
                if let Some((t0, p0)) = *last {
                    let dt = t_s - t0;
                    if dt > 0.0 {
                        *total_s += dt;
                        if position.distance(p0) / dt > *v_max {
                            *excess_s += dt;
                        }
                    }
                }
                *last = Some((*t_s, *position));
            }
            (FactorData::ErrorCollider { inside, entries, samples }, Sample::Motion { position, .. }, FactorParams::ErrorCollider { region, .. }) => {
                let now_inside = region.contains(*position);
                if now_inside && !*inside {
                    *entries += 1;
                }
                *inside = now_inside;
                *samples += 1;
            }
            (FactorData::Angle { deviation_deg }, Sample::Placement { orientation }, FactorParams::Angle { target, .. }) => {
                *deviation_deg = Some(orientation.normalized().angle_to(*target).to_degrees());
            }
            (FactorData::Question { correct }, Sample::Answer { chosen, correct: right }, _) => {
                *correct = Some(chosen == right);
            }
            (FactorData::Custom(c), s, _) => c.update(s),
            _ => unreachable!("accepts() guards kind pairing"),
        }
        Ok(())
    }

    /// Score without closing the factor.
    pub fn current_score(&self) -> FactorScore {
        let kind = self.spec.params.kind_name().to_owned();
        let weight = self.spec.weight;
        let (score, no_data) = match (&self.data, &self.spec.params) {
            (FactorData::Velocity { total_s, excess_s, .. }, _) => {
                if *total_s > 0.0 {
                    ((MAX_SCORE * (1.0 - excess_s / total_s)).clamp(0.0, MAX_SCORE), false)
                } else {
                    (MAX_SCORE, true)
                }
            }
            (FactorData::ErrorCollider { entries, samples, .. }, FactorParams::ErrorCollider { penalty, .. }) => {
                ((MAX_SCORE - penalty * *entries as f64).max(0.0), *samples == 0)
            }
            (FactorData::Angle { deviation_deg }, FactorParams::Angle { max_deviation_deg, .. }) => match deviation_deg {
                Some(d) => (MAX_SCORE * (1.0 - d / max_deviation_deg).max(0.0), false),
                None => (MAX_SCORE, true),
            },
            (FactorData::Question { correct }, _) => match correct {
                Some(true) => (MAX_SCORE, false),
                Some(false) => (0.0, false),
                None => (MAX_SCORE, true),
            },
            (FactorData::Custom(c), _) => match c.score() {
                Some(s) => (s.clamp(0.0, MAX_SCORE), false),
                None => (MAX_SCORE, true),
            },
            _ => unreachable!("data built from params"),
        };
        FactorScore { kind, weight, score, no_data }
    }

    /// Close the factor; later updates are rejected.
    pub fn finalize(&mut self) -> FactorScore {
        if let Some(f) = &self.finalized {
            return f.clone();
        }
        let s = self.current_score();
        self.finalized = Some(s.clone());
        s
    }

    /// Serializable view of the accumulated state (for determinism checks).
    pub fn state_json(&self) -> Value {
        let data = match &self.data {
            FactorData::Velocity { last, excess_s, total_s } => {
                json!({ "last": last.map(|(t, p)| (t, [p.x, p.y, p.z])), "excess_s": excess_s, "total_s": total_s })
            }
            FactorData::ErrorCollider { inside, entries, samples } => {
                json!({ "inside": inside, "entries": entries, "samples": samples })
            }
            FactorData::Angle { deviation_deg } => json!({ "deviation_deg": deviation_deg }),
            FactorData::Question { correct } => json!({ "correct": correct }),
            FactorData::Custom(c) => c.state(),
        };
        json!({ "kind": self.spec.params.kind_name(), "data": data, "finalized": self.finalized })
    }
}

fn sample_name(s: &Sample) -> &'static str {
    match s {
        Sample::Motion { .. } => "motion",
        Sample::Placement { .. } => "placement",
        Sample::Answer { .. } => "answer",
        Sample::Timing { .. } => "timing",
    }
}

/// Built-in custom factor: full marks within `limit_s`, falling linearly to
/// zero at twice the limit.
#[derive(Clone, Debug)]
pub struct TimeLimit {
    limit_s: f64,
    elapsed_s: Option<f64>,
}

impl TimeLimit {
    fn create(params: &Value) -> Result<Box<dyn CustomFactor>, AnalyticsError> {
        let limit_s = params
            .get("limit_s")
            .and_then(Value::as_f64)
            .filter(|l| *l > 0.0)
            .ok_or_else(|| AnalyticsError::Schema("time_limit factor needs a positive 'limit_s'".into()))?;
        Ok(Box::new(TimeLimit { limit_s, elapsed_s: None }))
    }
}

impl CustomFactor for TimeLimit {
    fn accepts(&self, sample: &Sample) -> bool {
        matches!(sample, Sample::Timing { .. })
    }

    fn update(&mut self, sample: &Sample) {
        if let Sample::Timing { elapsed_s } = sample {
            self.elapsed_s = Some(*elapsed_s);
        }
    }

    fn score(&self) -> Option<f64> {
        self.elapsed_s.map(|e| if e <= self.limit_s { MAX_SCORE } else { MAX_SCORE * (1.0 - (e - self.limit_s) / self.limit_s).max(0.0) })
    }

    fn state(&self) -> Value {
        json!({ "limit_s": self.limit_s, "elapsed_s": self.elapsed_s })
    }

    fn boxed_clone(&self) -> Box<dyn CustomFactor> {
        Box::new(self.clone())
    }
}

/// Weighted average `Σ wᵢ·sᵢ / Σ wᵢ`.
pub fn aggregate_action(scores: &[(f64, f64)]) -> Result<f64, AnalyticsError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(score, weight) in scores {
        if !(weight >= 0.0) {
            return Err(AnalyticsError::Config(format!("negative factor weight {weight}")));
        }
        num += weight * score;
        den += weight;
    }
    if den <= 0.0 {
        return Err(AnalyticsError::Config("factor weights sum to zero".into()));
    }
    Ok(num / den)
}
