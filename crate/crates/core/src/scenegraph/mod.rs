//! Training scenegraph: a dynamic acyclic graph of scored Actions.

pub mod document;
pub mod graph;

#[cfg(test)]
mod tests;

use thiserror::Error;

pub use document::{scaffold_action, ActionSpec, AltPathRule, Condition, Fragment, Prototype, ScenarioDocument, Trigger};
pub use graph::{ActionEvent, ActionNode, ActionOutcome, EventPayload, MotionSample, NodeState, Scenegraph, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("dependency error: {0}")]
    Dependency(String),
}

impl SceneError {
    /// Exit code used by the `validate` command.
    pub fn exit_code(&self) -> i32 {
        match self {
            SceneError::Cycle(_) => 3,
            _ => 2,
        }
    }
}
