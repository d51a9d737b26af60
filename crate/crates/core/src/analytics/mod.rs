//! Per-Action scoring and session reports.

pub mod factors;
pub mod report;
pub mod upload;

use thiserror::Error;

pub use factors::{aggregate_action, CustomFactor, FactorParams, FactorRegistry, FactorScore, FactorState, Region, Sample, ScoringFactorSpec};
pub use report::{ActionReport, SessionReport, TotalMode};
pub use upload::{flush_queue, upload_report, UploadConfig, UploadOutcome};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("factor '{0}' is already finalized")]
    Finalized(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report encoding error: {0}")]
    Json(#[from] serde_json::Error),
}
