//! Reporter team: the writer turns step evidence into a cited report or
//! direct answer, the checker validates each sentence against the session's
//! evidence snapshot and drives at most `max_rewrites` rewrite passes.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::plan::{PlanStep, StepKind};
use super::{AgentConfig, AgentError};
use crate::hetero_index::GraphRef;
use crate::llm_gateway::mock::{normalize_claim, INSUFFICIENT_NOTICE};
use crate::llm_gateway::tasks::{
    CheckInput, CheckOutput, ClaimStatusInput, IndexedText, MarkedPoint, SectionOut, WriteInput, WriteOutput,
    WriteSectionInput,
};
use crate::llm_gateway::{Gateway, Task};
use crate::object_store::Pid;
use crate::retrieval::Retriever;
use crate::text::{split_sentences, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    Report,
    DirectAnswer,
}

impl ReportMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportMode::Report => "report",
            ReportMode::DirectAnswer => "direct_answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub marker: usize,
    pub pid: Pid,
    #[serde(rename = "ref")]
    pub item_ref: GraphRef,
    pub title: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Supported,
    Unsupported,
    Contradicted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckFinding {
    pub claim: String,
    pub status: ClaimStatus,
    pub evidence: Vec<GraphRef>,
    /// Check pass that produced the finding, from 1.
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub query: String,
    pub title: String,
    pub mode: ReportMode,
    pub sections: Vec<Section>,
    pub citations: Vec<Citation>,
    pub check_log: Vec<CheckFinding>,
}

/// One accepted item as the checker sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvidenceEntry {
    pub item_ref: GraphRef,
    pub pid: Pid,
    pub title: String,
    pub text: String,
}

fn marker_regex() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\s*\[(\d+)\]").unwrap())
}

/// Marker numbers in order of appearance.
pub fn markers(text: &str) -> Vec<usize> {
    marker_regex()
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

pub fn strip_markers(text: &str) -> String {
    marker_regex().replace_all(text, "").into_owned()
}

const QUESTION_WORDS: &[&str] = &[
    "what", "which", "who", "whom", "whose", "when", "where", "why", "how", "is", "are", "was", "were", "do", "does",
    "did", "can", "could", "should", "would", "will", "has", "have", "had",
];

/// A question mark at the end or a leading question word.
pub fn is_interrogative(query: &str) -> bool {
    let q = query.trim();
    q.ends_with('?')
        || q.ends_with('？')
        || tokenize(q)
            .first()
            .is_some_and(|t| QUESTION_WORDS.contains(&t.as_str()))
}

/// Accepted items of all finished steps, deduplicated by ref in step order.
/// Action items contribute their statement instead of the object text.
pub fn evidence_snapshot(steps: &[PlanStep], retriever: &Retriever, cfg: &AgentConfig) -> Vec<EvidenceEntry> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in steps {
        let Some(r) = &s.result else { continue };
        for item in &r.accepted_items {
            if !seen.insert(item.item_ref.clone()) {
                continue;
            }
            let text = if s.kind == StepKind::Action {
                item.snippet.clone()
            } else {
                super::worker::item_text(item, retriever, cfg.evidence_chars)
            };
            let pid = retriever
                .graph()
                .resolve_to_objects(std::slice::from_ref(&item.item_ref))
                .ok()
                .and_then(|v| v.into_iter().next())
                .unwrap_or_else(|| item.l1().clone());
            out.push(EvidenceEntry {
                item_ref: item.item_ref.clone(),
                pid,
                title: item.metadata.title.clone(),
                text,
            });
        }
    }
    out
}

/// Renumber markers by first appearance, drop markers without a citation,
/// and keep only cited citations.
fn finalize(report: &mut Report, known: &BTreeMap<usize, Citation>) {
    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    let mut citations = Vec::new();
    for s in &mut report.sections {
        s.body = marker_regex()
            .replace_all(&s.body, |c: &regex::Captures| {
                let Some(old) = c[1].parse::<usize>().ok().filter(|m| known.contains_key(m)) else {
                    return String::new();
                };
                let next = renumber.len() + 1;
                let new = *renumber.entry(old).or_insert_with(|| {
                    let mut cit = known[&old].clone();
                    cit.marker = next;
                    citations.push(cit);
                    next
                });
                format!(" [{new}]")
            })
            .into_owned();
    }
    report.citations = citations;
}

fn pick_mode(query: &str, sections: usize, overridden: Option<ReportMode>) -> ReportMode {
    overridden.unwrap_or(if is_interrogative(query) && sections == 1 {
        ReportMode::DirectAnswer
    } else {
        ReportMode::Report
    })
}

/// Draft the report: one section per non-write step, each evidence point
/// cited with the marker of its source item.
pub fn write_report(
    query: &str,
    steps: &[PlanStep],
    retriever: &Retriever,
    cfg: &AgentConfig,
    mode: Option<ReportMode>,
) -> Result<Report, AgentError> {
    if let Some(s) = steps
        .iter()
        .find(|s| s.kind != StepKind::Write && !s.status.is_terminal())
    {
        return Err(AgentError::StepNotFinished(s.id));
    }
    let evidence = evidence_snapshot(steps, retriever, cfg);
    let index: BTreeMap<&GraphRef, usize> = evidence.iter().enumerate().map(|(i, e)| (&e.item_ref, i)).collect();
    let mut known: BTreeMap<usize, Citation> = BTreeMap::new();
    let mut marker_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sections_in = Vec::new();
    for s in steps.iter().filter(|s| s.kind != StepKind::Write) {
        let mut points = Vec::new();
        if let Some(r) = &s.result {
            for p in &r.evidence_points {
                let Some(item) = r.accepted_items.get(p.item) else {
                    continue;
                };
                let e = index[&item.item_ref];
                let next = marker_of.len() + 1;
                let marker = *marker_of.entry(e).or_insert(next);
                known.entry(marker).or_insert_with(|| Citation {
                    marker,
                    pid: evidence[e].pid.clone(),
                    item_ref: evidence[e].item_ref.clone(),
                    title: evidence[e].title.clone(),
                });
                points.push(MarkedPoint {
                    text: p.text.clone(),
                    marker,
                });
            }
        }
        sections_in.push(WriteSectionInput {
            heading: s.description.clone(),
            points,
        });
    }
    let mode = pick_mode(query, sections_in.len(), mode);
    let out: WriteOutput = retriever.gateway().complete(
        Task::Write,
        &WriteInput {
            query: query.to_string(),
            mode: mode.as_str().into(),
            sections: sections_in,
            draft: None,
            findings: vec![],
        },
    )?;
    let mut report = Report {
        query: query.to_string(),
        title: out.title,
        mode,
        sections: out
            .sections
            .into_iter()
            .map(|s| Section {
                heading: s.heading,
                body: s.body,
            })
            .collect(),
        citations: vec![],
        check_log: vec![],
    };
    finalize(&mut report, &known);
    Ok(report)
}

fn claims(report: &Report) -> Vec<String> {
    let notice = normalize_claim(INSUFFICIENT_NOTICE);
    let mut seen = HashSet::new();
    report
        .sections
        .iter()
        .flat_map(|s| split_sentences(&s.body))
        .filter(|c| {
            let n = normalize_claim(c);
            !n.is_empty() && n != notice && seen.insert(n)
        })
        .collect()
}

fn check_once(
    report: &Report,
    evidence: &[EvidenceEntry],
    gw: &Gateway,
    round: u32,
) -> Result<Vec<CheckFinding>, AgentError> {
    let claims = claims(report);
    if claims.is_empty() {
        return Ok(vec![]);
    }
    let out: CheckOutput = gw.complete(
        Task::CheckClaims,
        &CheckInput {
            claims,
            evidence: evidence
                .iter()
                .enumerate()
                .map(|(index, e)| IndexedText {
                    index,
                    text: e.text.clone(),
                })
                .collect(),
        },
    )?;
    Ok(out
        .findings
        .into_iter()
        .map(|f| {
            let refs: Vec<GraphRef> = f
                .evidence
                .iter()
                .filter_map(|&i| evidence.get(i).map(|e| e.item_ref.clone()))
                .collect();
            let status = match f.status.as_str() {
                "supported" if !refs.is_empty() => ClaimStatus::Supported,
                "contradicted" if !refs.is_empty() => ClaimStatus::Contradicted,
                _ => ClaimStatus::Unsupported,
            };
            CheckFinding {
                claim: f.claim,
                status,
                evidence: if status == ClaimStatus::Unsupported {
                    vec![]
                } else {
                    refs
                },
                round,
            }
        })
        .collect())
}

/// Check every claim; unsupported or contradicted claims trigger a rewrite
/// with the findings attached, at most `cfg.max_rewrites` times. The
/// returned findings (also stored in `check_log`) are all non-supported
/// findings of every pass.
pub fn check_report(
    mut report: Report,
    evidence: &[EvidenceEntry],
    gw: &Gateway,
    cfg: &AgentConfig,
) -> Result<(Report, Vec<CheckFinding>), AgentError> {
    let mut log = Vec::new();
    let mut round = 1;
    loop {
        let flagged: Vec<CheckFinding> = check_once(&report, evidence, gw, round)?
            .into_iter()
            .filter(|f| f.status != ClaimStatus::Supported)
            .collect();
        let clean = flagged.is_empty();
        log.extend(flagged.iter().cloned());
        if clean || round > cfg.max_rewrites {
            break;
        }
        let known: BTreeMap<usize, Citation> = report.citations.iter().map(|c| (c.marker, c.clone())).collect();
        let out: WriteOutput = gw.complete(
            Task::Write,
            &WriteInput {
                query: report.query.clone(),
                mode: report.mode.as_str().into(),
                sections: vec![],
                draft: Some(WriteOutput {
                    title: report.title.clone(),
                    sections: report
                        .sections
                        .iter()
                        .map(|s| SectionOut {
                            heading: s.heading.clone(),
                            body: s.body.clone(),
                        })
                        .collect(),
                }),
                findings: flagged
                    .iter()
                    .map(|f| ClaimStatusInput {
                        claim: f.claim.clone(),
                        status: serde_json::to_value(f.status)
                            .expect("serializable")
                            .as_str()
                            .unwrap_or_default()
                            .to_string(),
                    })
                    .collect(),
            },
        )?;
        report.title = out.title;
        report.sections = out
            .sections
            .into_iter()
            .map(|s| Section {
                heading: s.heading,
                body: s.body,
            })
            .collect();
        finalize(&mut report, &known);
        round += 1;
    }
    report.check_log = log.clone();
    Ok((report, log))
}

impl Report {
    /// Markdown body with `[n]` markers and a reference list.
    pub fn to_markdown(&self) -> String {
        let mut md = format!("# {}\n", self.title);
        for s in &self.sections {
            md.push_str(&format!("\n## {}\n\n{}\n", s.heading, s.body.trim()));
        }
        if !self.citations.is_empty() {
            md.push_str("\n## References\n\n");
            for c in &self.citations {
                md.push_str(&format!("[{}] {}, {} ({})\n", c.marker, c.title, c.pid, c.item_ref));
            }
        }
        md
    }

    /// The sidecar record: sections, citations and check log.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Section bodies without markers, for answer scoring.
    pub fn answer_text(&self) -> String {
        self.sections
            .iter()
            .map(|s| strip_markers(&s.body).trim().to_string())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn cited_pids(&self) -> Vec<Pid> {
        self.citations.iter().map(|c| c.pid.clone()).collect()
    }
}
