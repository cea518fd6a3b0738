//! One research session: a strictly sequential state machine with an
//! append-only event log.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::plan::{
    confirm_plan, plan, ClarificationRequest, Plan, PlanOutcome, PlanStatus, PlanStep, StepKind, StepStatus,
};
use super::reporter::{check_report, evidence_snapshot, write_report, Report, ReportMode};
use super::worker::{execute_action_step, execute_search_step};
use super::{AgentError, ResearchEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Planned,
    AwaitingUser,
    Confirmed,
    Running,
    Reporting,
    Done,
    Failed,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Created => "created",
            SessionState::Planned => "planned",
            SessionState::AwaitingUser => "awaiting_user",
            SessionState::Confirmed => "confirmed",
            SessionState::Running => "running",
            SessionState::Reporting => "reporting",
            SessionState::Done => "done",
            SessionState::Failed => "failed",
        }
    }

    /// The admitted transitions. `awaiting_user -> planned` re-plans after a
    /// clarification answer.
    pub fn can_transition_to(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (Created, Planned)
                | (Planned, AwaitingUser)
                | (AwaitingUser, Planned)
                | (AwaitingUser, Confirmed)
                | (Confirmed, Running)
                | (Running, Reporting)
                | (Reporting, Done)
                | (Created | Planned | Confirmed | Running | Reporting, Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Done | SessionState::Failed)
    }
}

impl std::fmt::Display for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PlanProposed,
    ClarificationNeeded,
    PlanConfirmed,
    StepStarted,
    StepCompleted,
    CheckFinding,
    ReportReady,
    Failed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PlanProposed => "plan_proposed",
            EventKind::ClarificationNeeded => "clarification_needed",
            EventKind::PlanConfirmed => "plan_confirmed",
            EventKind::StepStarted => "step_started",
            EventKind::StepCompleted => "step_completed",
            EventKind::CheckFinding => "check_finding",
            EventKind::ReportReady => "report_ready",
            EventKind::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub query: String,
    pub state: SessionState,
    #[serde(default)]
    pub plan: Option<Plan>,
    #[serde(default)]
    pub clarification: Option<ClarificationRequest>,
    #[serde(default)]
    pub events: Vec<SessionEvent>,
    #[serde(default)]
    pub report: Option<Report>,
    #[serde(default)]
    pub error: Option<String>,
    /// Forces report or direct-answer output instead of the heuristic.
    #[serde(default)]
    pub mode: Option<ReportMode>,
}

pub type Listener = Box<dyn FnMut(&SessionRecord, &SessionEvent) + Send>;

pub struct Session {
    record: SessionRecord,
    log_path: Option<PathBuf>,
    listener: Option<Listener>,
}

pub const EVENT_LOG_SUFFIX: &str = ".events.jsonl";

impl Session {
    /// A new session; with `log_dir`, events are appended to
    /// `{log_dir}/{id}.events.jsonl`.
    pub fn new(id: &str, query: &str, log_dir: Option<&Path>) -> Self {
        Session {
            record: SessionRecord {
                id: id.to_string(),
                query: query.to_string(),
                state: SessionState::Created,
                plan: None,
                clarification: None,
                events: vec![],
                report: None,
                error: None,
                mode: None,
            },
            log_path: log_dir.map(|d| d.join(format!("{id}{EVENT_LOG_SUFFIX}"))),
            listener: None,
        }
    }

    pub fn with_mode(mut self, mode: Option<ReportMode>) -> Self {
        self.record.mode = mode;
        self
    }

    /// Called after every event with the updated record.
    pub fn set_listener(&mut self, listener: Listener) {
        self.listener = Some(listener);
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn into_record(self) -> SessionRecord {
        self.record
    }

    pub fn state(&self) -> SessionState {
        self.record.state
    }

    fn transition(&mut self, to: SessionState) -> Result<(), AgentError> {
        let from = self.record.state;
        if !from.can_transition_to(to) {
            return Err(AgentError::InvalidTransition { from, to });
        }
        self.record.state = to;
        Ok(())
    }

    fn emit(&mut self, kind: EventKind, payload: Value) -> Result<(), AgentError> {
        let ev = SessionEvent {
            seq: self.record.events.len() as u64 + 1,
            kind,
            payload,
        };
        if let Some(p) = &self.log_path {
            let io = |source| AgentError::Io {
                path: p.display().to_string(),
                source,
            };
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(io)?;
            }
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(io)?;
            let line = serde_json::to_string(&ev).expect("event serializes");
            writeln!(f, "{line}").map_err(io)?;
        }
        self.record.events.push(ev);
        if let Some(l) = self.listener.as_mut() {
            l(&self.record, self.record.events.last().expect("just pushed"));
        }
        Ok(())
    }

    fn require(&self, state: SessionState, action: &'static str) -> Result<(), AgentError> {
        if self.record.state != state {
            return Err(AgentError::InvalidState {
                state: self.record.state,
                action,
            });
        }
        Ok(())
    }

    /// Record `err`, move to `failed` when admitted, and hand `err` back.
    fn fail(&mut self, err: AgentError) -> AgentError {
        let from = self.record.state;
        if from.can_transition_to(SessionState::Failed) {
            self.record.state = SessionState::Failed;
            self.record.error = Some(err.to_string());
            if let Some(p) = self.record.plan.as_mut() {
                p.status = PlanStatus::Failed;
            }
            let _ = self.emit(EventKind::Failed, json!({ "error": err.to_string(), "state": from }));
        }
        err
    }

    fn propose(&mut self, query: &str, env: &ResearchEnv) -> Result<(), AgentError> {
        self.transition(SessionState::Planned)?;
        let outcome = match plan(query, &env.retriever, env.config.search_top_k) {
            Ok(o) => o,
            Err(e) => return Err(self.fail(e)),
        };
        self.transition(SessionState::AwaitingUser)?;
        match outcome {
            PlanOutcome::Plan(p) => {
                self.record.clarification = None;
                self.record.plan = Some(p.clone());
                self.emit(EventKind::PlanProposed, json!({ "plan": p }))
            }
            PlanOutcome::Clarification(c) => {
                self.record.plan = None;
                self.record.clarification = Some(c.clone());
                self.emit(
                    EventKind::ClarificationNeeded,
                    serde_json::to_value(c).expect("serializable"),
                )
            }
        }
    }

    /// created -> planned -> awaiting_user, with a plan or a question.
    pub fn start(&mut self, env: &ResearchEnv) -> Result<(), AgentError> {
        self.require(SessionState::Created, "start")?;
        let q = self.record.query.clone();
        self.propose(&q, env)
    }

    /// Answer a pending clarification and re-plan with the combined query.
    pub fn clarify(&mut self, answer: &str, env: &ResearchEnv) -> Result<(), AgentError> {
        self.require(SessionState::AwaitingUser, "clarify")?;
        if self.record.clarification.is_none() {
            return Err(AgentError::InvalidState {
                state: self.record.state,
                action: "clarify",
            });
        }
        if answer.trim().is_empty() {
            return Err(AgentError::EmptyQuery);
        }
        let q = format!("{} {}", self.record.query.trim(), answer.trim());
        self.propose(&q, env)
    }

    /// Confirm the proposed plan, optionally replacing its steps.
    pub fn confirm(&mut self, edits: Option<Vec<PlanStep>>) -> Result<(), AgentError> {
        self.require(SessionState::AwaitingUser, "confirm")?;
        let Some(p) = self.record.plan.clone() else {
            return Err(AgentError::InvalidState {
                state: self.record.state,
                action: "confirm",
            });
        };
        let confirmed = confirm_plan(p, edits)?;
        self.transition(SessionState::Confirmed)?;
        self.record.plan = Some(confirmed.clone());
        self.emit(EventKind::PlanConfirmed, json!({ "plan": confirmed }))
    }

    /// Run a confirmed plan to a checked report.
    pub fn execute(&mut self, env: &ResearchEnv) -> Result<Report, AgentError> {
        self.require(SessionState::Confirmed, "execute")?;
        match self.run(env) {
            Ok(r) => Ok(r),
            Err(e) => Err(self.fail(e)),
        }
    }

    fn set_step(&mut self, i: usize, status: StepStatus) {
        if let Some(p) = self.record.plan.as_mut() {
            p.steps[i].status = status;
        }
    }

    fn run(&mut self, env: &ResearchEnv) -> Result<Report, AgentError> {
        self.transition(SessionState::Running)?;
        let mut plan = self.record.plan.clone().expect("confirmed session has a plan");
        plan.status = PlanStatus::Running;
        self.record.plan = Some(plan.clone());
        let n = plan.steps.len();
        for i in 0..n - 1 {
            let step = plan.steps[i].clone();
            for dep in &step.depends_on {
                let ok = plan
                    .steps
                    .iter()
                    .any(|s| s.id == *dep && matches!(s.status, StepStatus::Done | StepStatus::Insufficient));
                if !ok {
                    return Err(AgentError::StepNotFinished(*dep));
                }
            }
            self.set_step(i, StepStatus::Running);
            self.emit(
                EventKind::StepStarted,
                json!({ "step": step.id, "kind": step.kind, "description": step.description }),
            )?;
            let result = match step.kind {
                StepKind::Search => execute_search_step(&step, &env.retriever, &env.config),
                StepKind::Action => execute_action_step(&step, env.store.as_ref()),
                StepKind::Write => unreachable!("validated plans end with their only write step"),
            };
            let result = match result {
                Ok(r) => r,
                Err(e) => {
                    self.set_step(i, StepStatus::Failed);
                    return Err(e);
                }
            };
            let status = if result.insufficient {
                StepStatus::Insufficient
            } else {
                StepStatus::Done
            };
            let payload = json!({
                "step": step.id,
                "status": status,
                "accepted": result.accepted_items.len(),
                "rejected": result.rejected_count,
                "iterations_used": result.iterations_used,
                "insufficient": result.insufficient,
                "evidence_summary": result.evidence_summary,
            });
            plan.steps[i].status = status;
            plan.steps[i].result = Some(result);
            self.record.plan = Some(plan.clone());
            self.emit(EventKind::StepCompleted, payload)?;
        }
        self.transition(SessionState::Reporting)?;
        let write = plan.steps[n - 1].clone();
        self.set_step(n - 1, StepStatus::Running);
        self.emit(
            EventKind::StepStarted,
            json!({ "step": write.id, "kind": write.kind, "description": write.description }),
        )?;
        let draft = write_report(&plan.query, &plan.steps, &env.retriever, &env.config, self.record.mode)?;
        let evidence = evidence_snapshot(&plan.steps, &env.retriever, &env.config);
        let (report, findings) = check_report(draft, &evidence, env.retriever.gateway(), &env.config)?;
        for f in findings {
            self.emit(EventKind::CheckFinding, serde_json::to_value(f).expect("serializable"))?;
        }
        plan.steps[n - 1].status = StepStatus::Done;
        plan.status = PlanStatus::Done;
        self.record.plan = Some(plan);
        self.emit(
            EventKind::StepCompleted,
            json!({ "step": write.id, "status": StepStatus::Done }),
        )?;
        self.transition(SessionState::Done)?;
        self.record.report = Some(report.clone());
        self.emit(
            EventKind::ReportReady,
            json!({ "title": report.title, "mode": report.mode, "citations": report.citations.len() }),
        )?;
        Ok(report)
    }
}

/// Plan, confirm without edits and execute. Stops in `awaiting_user` when
/// the planner asks for clarification.
pub fn run_research(
    query: &str,
    env: &ResearchEnv,
    session_id: &str,
    log_dir: Option<&Path>,
    mode: Option<ReportMode>,
) -> Result<SessionRecord, AgentError> {
    let mut s = Session::new(session_id, query, log_dir).with_mode(mode);
    s.start(env)?;
    if s.record().clarification.is_some() {
        return Ok(s.into_record());
    }
    s.confirm(None)?;
    s.execute(env)?;
    Ok(s.into_record())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions() {
        use SessionState::*;
        assert!(Created.can_transition_to(Planned));
        assert!(AwaitingUser.can_transition_to(Planned));
        assert!(!Planned.can_transition_to(Confirmed));
        assert!(!AwaitingUser.can_transition_to(Running));
        assert!(!Done.can_transition_to(Failed));
        assert!(Running.can_transition_to(Failed));
    }
}
