//! Worker team: search steps (retrieve, filter, judge relevance, refine and
//! reissue) and action steps over table objects.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::action::{run_table_op, ActionError};
use super::plan::{PlanStep, StepPayload};
use super::{AgentConfig, AgentError};
use crate::hetero_index::GraphRef;
use crate::ingestion::parse_csv;
use crate::llm_gateway::tasks::{EvidenceInput, EvidenceOutput, IdText, IndexedText, RelevanceInput, RelevanceOutput};
use crate::llm_gateway::Task;
use crate::object_store::{ObjectKind, ObjectLookup};
use crate::retrieval::{apply_filters, ItemMetadata, RetrievedItem, Retriever};
use crate::text::{tokenize, top_keywords, truncate_chars};

/// Keywords appended to the query per refinement.
pub const REFINE_KEYWORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub text: String,
    /// Index into the step's accepted items.
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub accepted_items: Vec<RetrievedItem>,
    pub evidence_summary: String,
    #[serde(default)]
    pub evidence_points: Vec<EvidencePoint>,
    pub iterations_used: u32,
    pub rejected_count: usize,
    /// No relevant context was found.
    #[serde(default)]
    pub insufficient: bool,
    /// Query text of the last iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_output: Option<Value>,
}

/// Text an item is judged and summarized on.
pub fn item_text(item: &RetrievedItem, retriever: &Retriever, max_chars: usize) -> String {
    let t = retriever.full_text(&item.item_ref).unwrap_or(&item.snippet);
    truncate_chars(t, max_chars).to_string()
}

fn refinement_terms(query: &str, item: &RetrievedItem, retriever: &Retriever, max_chars: usize) -> Vec<String> {
    let have: HashSet<String> = tokenize(query).into_iter().collect();
    top_keywords(&item_text(item, retriever, max_chars), REFINE_KEYWORDS * 3)
        .into_iter()
        .filter(|k| !have.contains(&k.to_lowercase()))
        .take(REFINE_KEYWORDS)
        .collect()
}

/// Retrieve, filter, judge and refine until enough context is accepted or
/// the iteration budget is spent. One relevance call per iteration with
/// new candidates, plus one evidence summary.
pub fn execute_search_step(
    step: &PlanStep,
    retriever: &Retriever,
    cfg: &AgentConfig,
) -> Result<StepResult, AgentError> {
    let base = step.query().ok_or(AgentError::WrongStepKind(step.id))?;
    let gw = retriever.gateway();
    let limit = base.top_k;
    let mut q = base.clone();
    let mut judged: BTreeSet<GraphRef> = BTreeSet::new();
    let mut accepted: Vec<RetrievedItem> = Vec::new();
    let mut rejected: Vec<RetrievedItem> = Vec::new();
    let mut iterations = 0;
    for it in 1..=cfg.max_refine_iterations.max(1) {
        iterations = it;
        let items = apply_filters(retriever.search(&q)?, &q.filters);
        let fresh: Vec<RetrievedItem> = items
            .into_iter()
            .filter(|i| judged.insert(i.item_ref.clone()))
            .collect();
        if !fresh.is_empty() {
            let input = RelevanceInput {
                query: base.text.clone(),
                items: fresh
                    .iter()
                    .map(|i| IdText {
                        id: i.item_ref.to_string(),
                        text: item_text(i, retriever, cfg.evidence_chars),
                    })
                    .collect(),
            };
            let out: RelevanceOutput = gw.complete(Task::FilterRelevance, &input)?;
            let ok: HashSet<String> = out.relevant.into_iter().collect();
            for i in fresh {
                if ok.contains(&i.item_ref.to_string()) && accepted.len() < limit {
                    accepted.push(i);
                } else {
                    rejected.push(i);
                }
            }
        }
        if accepted.len() >= cfg.min_context_items || it == cfg.max_refine_iterations {
            break;
        }
        if let Some(best) = accepted.first().or(rejected.first()) {
            let terms = refinement_terms(&q.text, best, retriever, cfg.evidence_chars);
            if !terms.is_empty() {
                q.text = format!("{} {}", q.text, terms.join(" "));
            }
        }
        q.top_k += limit;
    }
    let (summary, points) = if accepted.is_empty() {
        (String::new(), vec![])
    } else {
        let out: EvidenceOutput = gw.complete(
            Task::SummarizeEvidence,
            &EvidenceInput {
                query: base.text.clone(),
                items: accepted
                    .iter()
                    .enumerate()
                    .map(|(index, i)| IndexedText {
                        index,
                        text: item_text(i, retriever, cfg.evidence_chars),
                    })
                    .collect(),
            },
        )?;
        let points = out
            .points
            .into_iter()
            .filter(|p| p.source < accepted.len() && !p.text.trim().is_empty())
            .map(|p| EvidencePoint {
                text: p.text,
                item: p.source,
            })
            .collect();
        (out.summary, points)
    };
    Ok(StepResult {
        insufficient: accepted.is_empty(),
        accepted_items: accepted,
        evidence_summary: summary,
        evidence_points: points,
        iterations_used: iterations,
        rejected_count: rejected.len(),
        final_query: Some(q.text),
        action_output: None,
    })
}

/// Run a table action. The table object itself becomes the step's single
/// accepted item so the statement can be cited.
pub fn execute_action_step(step: &PlanStep, store: &dyn ObjectLookup) -> Result<StepResult, AgentError> {
    let Some(StepPayload::Action(spec)) = &step.payload else {
        return Err(AgentError::WrongStepKind(step.id));
    };
    let obj = store.get(&spec.object)?;
    if obj.kind != ObjectKind::Table {
        return Err(ActionError::NotATable {
            pid: obj.pid.to_string(),
            kind: obj.kind.as_str().into(),
        }
        .into());
    }
    let bytes = store.read_payload(&obj.payload_ref)?;
    let table = parse_csv(&bytes).map_err(|e| ActionError::Source(e.to_string()))?;
    let (output, statement) = run_table_op(&table, &spec.op, &obj.explicit_meta.title)?;
    let item = RetrievedItem {
        item_ref: GraphRef::Object(obj.pid.clone()),
        score: 1.0,
        snippet: statement.clone(),
        metadata: ItemMetadata {
            kind: obj.kind.as_str().into(),
            object_kind: obj.kind.as_str().into(),
            title: obj.explicit_meta.title.clone(),
            source: obj.explicit_meta.source.clone(),
            timestamp: obj.explicit_meta.timestamp,
            domain: obj.explicit_meta.domain.clone(),
        },
        provenance: vec![obj.pid.clone()],
    };
    Ok(StepResult {
        accepted_items: vec![item],
        evidence_summary: statement.clone(),
        evidence_points: vec![EvidencePoint {
            text: statement,
            item: 0,
        }],
        iterations_used: 0,
        rejected_count: 0,
        insufficient: false,
        final_query: None,
        action_output: Some(output),
    })
}
