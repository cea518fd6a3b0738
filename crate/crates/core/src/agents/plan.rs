//! Research plans: validation, the planner call and user confirmation.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::action::ActionSpec;
use super::worker::StepResult;
use super::AgentError;
use crate::digest::sha256_hex;
use crate::llm_gateway::tasks::{PlanInput, PlanOutput, PlanStepOut};
use crate::llm_gateway::Task;
use crate::retrieval::{RetrievalQuery, Retriever, Strategy, Tier};

pub const MAX_PLAN_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("a plan needs at least one step")]
    Empty,
    #[error("a plan has at most {MAX_PLAN_STEPS} steps, got {0}")]
    TooManySteps(usize),
    #[error("duplicate step id {0}")]
    DuplicateId(u32),
    #[error("a plan needs exactly one write step, got {0}")]
    WriteCount(usize),
    #[error("the write step must be the last step")]
    WriteNotLast,
    #[error("step {step} depends on step {dep}, which does not come before it")]
    ForwardDependency { step: u32, dep: u32 },
    #[error("step {step}: {message}")]
    Payload { step: u32, message: String },
    #[error("plan is {0}, expected proposed")]
    NotProposed(PlanStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Proposed,
    Confirmed,
    Running,
    Done,
    Failed,
}

impl std::fmt::Display for PlanStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("serializable");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Search,
    Action,
    Write,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    #[default]
    Pending,
    Running,
    Done,
    Insufficient,
    Failed,
}

impl StepStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, StepStatus::Done | StepStatus::Insufficient | StepStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPayload {
    Search(RetrievalQuery),
    Action(ActionSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub id: u32,
    pub kind: StepKind,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<StepPayload>,
    #[serde(default)]
    pub depends_on: BTreeSet<u32>,
    #[serde(default)]
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<StepResult>,
}

impl PlanStep {
    pub fn search(id: u32, description: &str, query: RetrievalQuery) -> Self {
        PlanStep {
            id,
            kind: StepKind::Search,
            description: description.into(),
            payload: Some(StepPayload::Search(query)),
            depends_on: BTreeSet::new(),
            status: StepStatus::Pending,
            result: None,
        }
    }

    pub fn action(id: u32, description: &str, spec: ActionSpec) -> Self {
        PlanStep {
            id,
            kind: StepKind::Action,
            description: description.into(),
            payload: Some(StepPayload::Action(spec)),
            depends_on: BTreeSet::new(),
            status: StepStatus::Pending,
            result: None,
        }
    }

    pub fn write(id: u32, description: &str, depends_on: impl IntoIterator<Item = u32>) -> Self {
        PlanStep {
            id,
            kind: StepKind::Write,
            description: description.into(),
            payload: None,
            depends_on: depends_on.into_iter().collect(),
            status: StepStatus::Pending,
            result: None,
        }
    }

    pub fn query(&self) -> Option<&RetrievalQuery> {
        match &self.payload {
            Some(StepPayload::Search(q)) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub id: String,
    pub query: String,
    pub steps: Vec<PlanStep>,
    pub status: PlanStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClarificationRequest {
    pub question: String,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PlanOutcome {
    Plan(Plan),
    Clarification(ClarificationRequest),
}

/// Check the step-list invariants: 1..=8 steps, unique ids, exactly one
/// write step and it is last, dependencies on earlier steps only, and a
/// payload matching each kind.
pub fn validate_steps(steps: &[PlanStep]) -> Result<(), PlanError> {
    if steps.is_empty() {
        return Err(PlanError::Empty);
    }
    if steps.len() > MAX_PLAN_STEPS {
        return Err(PlanError::TooManySteps(steps.len()));
    }
    let writes = steps.iter().filter(|s| s.kind == StepKind::Write).count();
    if writes != 1 {
        return Err(PlanError::WriteCount(writes));
    }
    if steps.last().map(|s| s.kind) != Some(StepKind::Write) {
        return Err(PlanError::WriteNotLast);
    }
    let mut earlier = HashSet::new();
    for s in steps {
        if earlier.contains(&s.id) {
            return Err(PlanError::DuplicateId(s.id));
        }
        if let Some(&dep) = s.depends_on.iter().find(|d| !earlier.contains(*d)) {
            return Err(PlanError::ForwardDependency { step: s.id, dep });
        }
        let payload_err = |message: String| PlanError::Payload { step: s.id, message };
        match (s.kind, &s.payload) {
            (StepKind::Search, Some(StepPayload::Search(q))) => q.validate().map_err(|e| payload_err(e.to_string()))?,
            (StepKind::Action, Some(StepPayload::Action(_))) => {}
            (StepKind::Write, None) => {}
            (kind, _) => {
                return Err(payload_err(format!(
                    "payload does not match step kind {}",
                    serde_json::to_value(kind).expect("serializable")
                )))
            }
        }
        earlier.insert(s.id);
    }
    Ok(())
}

pub fn plan_id(query: &str) -> String {
    format!("plan-{}", &sha256_hex(query.as_bytes())[..16])
}

fn step_from_model(i: usize, s: PlanStepOut, query: &str, top_k: usize) -> Result<PlanStep, AgentError> {
    let id = i as u32 + 1;
    let bad = |message: String| AgentError::Plan(PlanError::Payload { step: id, message });
    let mut step = match s.kind.as_str() {
        "search" => {
            let tier: Tier = s.tier.as_deref().unwrap_or("chunk").parse().map_err(bad)?;
            let strategy: Strategy = s.strategy.as_deref().unwrap_or("hybrid").parse().map_err(bad)?;
            let text = s
                .query
                .filter(|q| !q.trim().is_empty())
                .unwrap_or_else(|| query.to_string());
            PlanStep::search(
                id,
                &s.description,
                RetrievalQuery::new(&text, tier, strategy).with_top_k(top_k),
            )
        }
        "write" => PlanStep::write(id, &s.description, []),
        other => return Err(bad(format!("planner produced unsupported step kind {other:?}"))),
    };
    step.depends_on = s.depends_on.into_iter().collect();
    Ok(step)
}

/// Ask the planner for a plan or a clarification question. The planner sees
/// the indexed vocabulary and domain names so it can judge whether a short
/// query is on topic.
pub fn plan(query: &str, retriever: &Retriever, top_k: usize) -> Result<PlanOutcome, AgentError> {
    if query.trim().is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let mut vocab: BTreeSet<String> = retriever.domain_vocabulary().into_iter().collect();
    vocab.extend(retriever.objects().map(|o| o.explicit_meta.domain.clone()));
    let out: PlanOutput = retriever.gateway().complete(
        Task::Plan,
        &PlanInput {
            query: query.to_string(),
            domain_keywords: vocab.into_iter().collect(),
        },
    )?;
    if let Some(c) = out.clarify {
        if c.question.trim().is_empty() {
            return Err(AgentError::Plan(PlanError::Empty));
        }
        return Ok(PlanOutcome::Clarification(ClarificationRequest {
            question: c.question,
            missing: c.missing,
        }));
    }
    let steps = out
        .steps
        .into_iter()
        .enumerate()
        .map(|(i, s)| step_from_model(i, s, query, top_k))
        .collect::<Result<Vec<_>, _>>()?;
    validate_steps(&steps)?;
    Ok(PlanOutcome::Plan(Plan {
        id: plan_id(query),
        query: query.to_string(),
        steps,
        status: PlanStatus::Proposed,
    }))
}

/// Confirm a proposed plan, optionally replacing its steps wholesale.
pub fn confirm_plan(mut plan: Plan, edits: Option<Vec<PlanStep>>) -> Result<Plan, PlanError> {
    if plan.status != PlanStatus::Proposed {
        return Err(PlanError::NotProposed(plan.status));
    }
    if let Some(mut steps) = edits {
        validate_steps(&steps)?;
        for s in &mut steps {
            s.status = StepStatus::Pending;
            s.result = None;
        }
        plan.steps = steps;
    }
    plan.status = PlanStatus::Confirmed;
    Ok(plan)
}
