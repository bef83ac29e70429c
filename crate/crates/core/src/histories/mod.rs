//! Sequence-form histories: per-agent trees, exact evaluation of histories
//! and joint policies, and a brute-force optimal-policy oracle.

mod eval;
mod policy;
mod tree;

use thiserror::Error;

use crate::model::ModelError;

pub use eval::{Evaluator, JointValue};
pub use policy::{
    constant_policy, count_policies, enumerate_agent_policies, enumerate_joint_policies, joint_count, joint_policy_at,
    policy_from_json, policy_to_json, AgentPolicy, BruteForce, PolicyEntry, PurePolicy, DEFAULT_MAX_POLICIES,
};
pub use tree::{DecisionPoint, HistoryNode, HistoryTree, Trajectory, DEFAULT_MAX_NODES};

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("history tree of agent {agent} exceeds {cap} nodes")]
    TooManyNodes { agent: usize, cap: usize },
    #[error("context must list one terminal history per agent ({expected}), got {got}")]
    MissingContext { expected: usize, got: usize },
    #[error("agent {agent} has no terminal history {terminal}")]
    TerminalOutOfRange { agent: usize, terminal: usize },
    #[error("{count} pure joint policies exceed the cap of {cap}")]
    PolicyCount { count: u128, cap: u128 },
    #[error("agent {agent}: policy has no action after `{history}` in state `{state}`")]
    IncompletePolicy { agent: usize, history: String, state: String },
    #[error("unknown history {0}")]
    UnknownHistory(String),
    #[error("malformed policy: {0}")]
    PolicyShape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Enumerates one agent's history tree with the default node cap.
pub fn enumerate_histories(inst: &crate::model::Instance, agent: usize) -> Result<HistoryTree, HistoryError> {
    HistoryTree::enumerate(inst, agent, DEFAULT_MAX_NODES)
}
