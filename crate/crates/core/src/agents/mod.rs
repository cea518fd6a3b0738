//! The research loop: a planner that proposes plans or asks for
//! clarification, workers that execute search and table steps, and a
//! writer/checker pair that produces a cited, verified report.

pub mod action;
pub mod plan;
pub mod reporter;
pub mod session;
pub mod worker;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{ActionError, ActionSpec, AggFunc, ChartType, TableOp};
pub use plan::{
    confirm_plan, plan, validate_steps, ClarificationRequest, Plan, PlanError, PlanOutcome, PlanStatus, PlanStep,
    StepKind, StepPayload, StepStatus,
};
pub use reporter::{check_report, write_report, CheckFinding, Citation, ClaimStatus, Report, ReportMode, Section};
pub use session::{run_research, EventKind, Session, SessionEvent, SessionRecord, SessionState};
pub use worker::{execute_action_step, execute_search_step, StepResult};

use crate::llm_gateway::GatewayError;
use crate::object_store::{ObjectLookup, StoreError};
use crate::retrieval::{RetrievalError, Retriever};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("step {0} has the wrong kind or payload for this executor")]
    WrongStepKind(u32),
    #[error("step {0} has not finished")]
    StepNotFinished(u32),
    #[error("cannot {action} a session in state {state}")]
    InvalidState { state: SessionState, action: &'static str },
    #[error("illegal session transition {from} -> {to}")]
    InvalidTransition { from: SessionState, to: SessionState },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_refine_iterations: u32,
    /// Accepted items below this count trigger query refinement.
    pub min_context_items: usize,
    pub search_top_k: usize,
    pub max_rewrites: u32,
    /// Item text passed to relevance, evidence and check calls.
    pub evidence_chars: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_refine_iterations: 3,
            min_context_items: 3,
            search_top_k: 10,
            max_rewrites: 2,
            evidence_chars: 2000,
        }
    }
}

impl AgentConfig {
    /// Upper bound on completion calls for a plan of `steps` steps.
    pub fn call_budget(&self, steps: usize) -> u64 {
        steps as u64 * (u64::from(self.max_refine_iterations) + 2) + 4
    }
}

/// What a session runs against: the immutable index and the object store
/// (for table actions).
#[derive(Clone)]
pub struct ResearchEnv {
    pub retriever: Arc<Retriever>,
    pub store: Arc<dyn ObjectLookup>,
    pub config: AgentConfig,
}
