use serde::{Deserialize, Serialize};

use super::factors::{aggregate_action, FactorScore};
use super::AnalyticsError;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// How Action scores combine into the session total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalMode {
    /// Unweighted mean over completed Actions.
    #[default]
    Mean,
    /// Mean weighted by each Action's `weight`.
    ActionWeighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub action_id: String,
    pub weight: f64,
    pub activated_us: u64,
    pub completed_us: u64,
    pub attempts: u32,
    pub factors: Vec<FactorScore>,
    pub score: f64,
}

impl ActionReport {
    pub fn new(action_id: String, weight: f64, activated_us: u64, completed_us: u64, attempts: u32, factors: Vec<FactorScore>) -> Result<Self, AnalyticsError> {
        let score = if factors.is_empty() {
            100.0
        } else {
            let pairs: Vec<(f64, f64)> = factors.iter().map(|f| (f.score, f.weight)).collect();
            aggregate_action(&pairs)?
        };
        Ok(ActionReport { action_id, weight, activated_us, completed_us, attempts, factors, score })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub format_version: u32,
    pub session_id: String,
    pub scenario: String,
    pub started_us: u64,
    pub finished_us: u64,
    pub total_mode: TotalMode,
    pub actions: Vec<ActionReport>,
    pub total_score: f64,
}

impl SessionReport {
    pub fn new(
        session_id: impl Into<String>,
        scenario: impl Into<String>,
        started_us: u64,
        finished_us: u64,
        total_mode: TotalMode,
        actions: Vec<ActionReport>,
    ) -> Result<Self, AnalyticsError> {
        let total_score = total(&actions, total_mode)?;
        Ok(SessionReport {
            format_version: REPORT_FORMAT_VERSION,
            session_id: session_id.into(),
            scenario: scenario.into(),
            started_us,
            finished_us,
            total_mode,
            actions,
            total_score,
        })
    }

    pub fn to_json(&self) -> Result<String, AnalyticsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, AnalyticsError> {
        let r: SessionReport = serde_json::from_str(s)?;
        if r.format_version != REPORT_FORMAT_VERSION {
            return Err(AnalyticsError::Schema(format!("unsupported report version {}", r.format_version)));
        }
        Ok(r)
    }
}

fn total(actions: &[ActionReport], mode: TotalMode) -> Result<f64, AnalyticsError> {
    if actions.is_empty() {
        return Ok(0.0);
    }
    match mode {
        TotalMode::Mean => Ok(actions.iter().map(|a| a.score).sum::<f64>() / actions.len() as f64),
        TotalMode::ActionWeighted => {
            let pairs: Vec<(f64, f64)> = actions.iter().map(|a| (a.score, a.weight)).collect();
            aggregate_action(&pairs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(score: f64, weight: f64) -> FactorScore {
        FactorScore { kind: "k".into(), weight, score, no_data: false }
    }

    #[test]
    fn totals() {
        let a = ActionReport::new("a".into(), 1.0, 0, 1, 1, vec![fs(80.0, 1.0), fs(60.0, 3.0)]).unwrap();
        let b = ActionReport::new("b".into(), 3.0, 1, 2, 1, vec![]).unwrap();
        assert_eq!(a.score, 65.0);
        assert_eq!(b.score, 100.0);
        let mean = SessionReport::new("s", "x", 0, 2, TotalMode::Mean, vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(mean.total_score, 82.5);
        let weighted = SessionReport::new("s", "x", 0, 2, TotalMode::ActionWeighted, vec![a, b]).unwrap();
        assert!((weighted.total_score - (65.0 + 300.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let a = ActionReport::new("a".into(), 1.0, 0, 1, 2, vec![fs(50.0, 1.0)]).unwrap();
        let r = SessionReport::new("s", "x", 0, 9, TotalMode::Mean, vec![a]).unwrap();
        assert_eq!(SessionReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
