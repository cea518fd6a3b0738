//! Evaluation harness for the three task families (object retrieval, QA,
//! report writing) and a seeded synthetic corpus generator.

pub mod metrics;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{
    answer_metrics, context_metrics, f1, judge_report, prf1, AnswerScores, JudgeScores, Prf1, CONTEXT_MATCH_THRESHOLD,
    JUDGE_DIMENSIONS, JUDGE_RUNS,
};
pub use synth::{gen_synthetic, SynthManifest, SynthSpec};

use crate::agents::reporter::evidence_snapshot;
use crate::agents::{run_research, AgentError, ReportMode, ResearchEnv};
use crate::llm_gateway::GatewayError;
use crate::object_store::Pid;
use crate::retrieval::{RetrievalError, RetrievalQuery, Strategy, Tier};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}:{line}: {message}")]
    Dataset { path: String, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown task {0:?} (1, 2 or 3)")]
    UnknownTask(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hops {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task1Item {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub relevant_pids: BTreeSet<Pid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task2Item {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub gold_answer: String,
    pub gold_contexts: Vec<String>,
    pub hops: Hops,
    pub domains: BTreeSet<String>,
    #[serde(default)]
    pub cross_domain: bool,
    /// Short string the answer must contain (synthetic items).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_key: Option<String>,
    /// L1 objects holding the gold contexts (synthetic items).
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub source_pids: BTreeSet<Pid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task3Item {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
    pub domains: BTreeSet<String>,
}

pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

impl Validate for Task1Item {
    fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("field `question`: must not be empty".into());
        }
        if self.relevant_pids.is_empty() {
            return Err("field `relevant_pids`: must not be empty".into());
        }
        Ok(())
    }
}

impl Validate for Task2Item {
    fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("field `question`: must not be empty".into());
        }
        if self.gold_contexts.is_empty() {
            return Err("field `gold_contexts`: must not be empty".into());
        }
        if self.cross_domain && self.domains.len() < 2 {
            return Err("field `domains`: a cross-domain item needs at least two domains".into());
        }
        Ok(())
    }
}

impl Validate for Task3Item {
    fn validate(&self) -> Result<(), String> {
        if self.topic.trim().is_empty() {
            return Err("field `topic`: must not be empty".into());
        }
        Ok(())
    }
}

/// One item per non-blank line; errors name the line and field.
pub fn load_items<T: DeserializeOwned + Validate>(path: &Path) -> Result<Vec<T>, BenchError> {
    let raw = std::fs::read_to_string(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| BenchError::Dataset {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let item: T = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        item.validate().map_err(err)?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_items<T: Serialize>(path: &Path, items: &[T]) -> Result<(), BenchError> {
    let mut body = String::new();
    for it in items {
        body.push_str(&serde_json::to_string(it).expect("items serialize"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Cutoff for task 1.
    pub k: usize,
    pub match_threshold: f64,
    pub judge_runs: u32,
    /// Seed of the dataset, recorded in the report.
    pub seed: Option<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            k: 5,
            match_threshold: CONTEXT_MATCH_THRESHOLD,
            judge_runs: JUDGE_RUNS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub model_id: String,
    pub seed: Option<u64>,
    pub k: usize,
    pub match_threshold: f64,
    pub judge_runs: u32,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: u8,
    pub config: ConfigSnapshot,
    /// Score names in display order.
    pub columns: Vec<String>,
    pub rows: Vec<MetricRow>,
    /// Mean of each column over rows.
    pub aggregate: BTreeMap<String, f64>,
}

impl MetricReport {
    fn new(task: u8, config: ConfigSnapshot, columns: &[&str], rows: Vec<MetricRow>) -> Self {
        let aggregate = columns
            .iter()
            .map(|c| {
                let n = rows.len().max(1) as f64;
                (c.to_string(), rows.iter().map(|r| r.scores[*c]).sum::<f64>() / n)
            })
            .collect();
        MetricReport {
            task,
            config,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Markdown table: one row per item plus the mean row.
    pub fn render_table(&self) -> String {
        let mut t = format!(
            "| id | {} |\n|---|{}\n",
            self.columns.join(" | "),
            "---|".repeat(self.columns.len())
        );
        let cells = |scores: &BTreeMap<String, f64>| {
            self.columns
                .iter()
                .map(|c| format!("{:.2}", scores[c]))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        for r in &self.rows {
            t.push_str(&format!("| {} | {} |\n", r.id, cells(&r.scores)));
        }
        t.push_str(&format!("| mean | {} |\n", cells(&self.aggregate)));
        t
    }

    /// Single line of aggregate scores.
    pub fn summary_line(&self) -> String {
        self.columns
            .iter()
            .map(|c| format!("{c}={:.2}", self.aggregate[c]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Write `{stem}.json` and `{stem}.md`.
    pub fn write(&self, stem: &Path) -> Result<(), BenchError> {
        let j = stem.with_extension("json");
        std::fs::write(&j, self.to_json()).map_err(io(&j))?;
        let m = stem.with_extension("md");
        std::fs::write(&m, self.render_table()).map_err(io(&m))?;
        Ok(())
    }
}

pub const TASK1_COLUMNS: [&str; 3] = ["precision", "recall", "f1"];
pub const TASK2_COLUMNS: [&str; 6] = [
    "accuracy",
    "faithfulness",
    "relevance",
    "ctx_precision",
    "ctx_recall",
    "ctx_f1",
];

fn item_id(id: &Option<String>, i: usize) -> String {
    id.clone().unwrap_or_else(|| format!("{}", i + 1))
}

/// Task 1 row: object-tier hybrid search, P/R/F1 at `k`.
pub fn score_task1(item: &Task1Item, env: &ResearchEnv, k: usize) -> Result<BTreeMap<String, f64>, BenchError> {
    let q = RetrievalQuery::new(&item.question, Tier::Object, Strategy::Hybrid).with_top_k(k);
    let retrieved: Vec<Pid> = env.retriever.search(&q)?.iter().map(|i| i.l1().clone()).collect();
    let s = prf1(&retrieved, &item.relevant_pids, k)?;
    Ok(BTreeMap::from([
        ("precision".into(), s.precision),
        ("recall".into(), s.recall),
        ("f1".into(), s.f1),
    ]))
}

/// Task 2 row: a direct-answer research run scored for answer and context
/// quality. A run that ends in a clarification scores zero.
pub fn score_task2(
    item: &Task2Item,
    env: &ResearchEnv,
    session: &str,
    threshold: f64,
) -> Result<BTreeMap<String, f64>, BenchError> {
    let rec = run_research(&item.question, env, session, None, Some(ReportMode::DirectAnswer))?;
    let (answer, contexts) = match (&rec.report, &rec.plan) {
        (Some(r), Some(p)) => {
            let ev = evidence_snapshot(&p.steps, &env.retriever, &env.config);
            (r.answer_text(), ev.into_iter().map(|e| e.text).collect::<Vec<_>>())
        }
        _ => (String::new(), vec![]),
    };
    let a = answer_metrics(
        &item.question,
        &item.gold_answer,
        &answer,
        &contexts,
        env.retriever.gateway(),
    )?;
    let c = context_metrics(&contexts, &item.gold_contexts, threshold);
    Ok(BTreeMap::from([
        ("accuracy".into(), a.accuracy),
        ("faithfulness".into(), a.faithfulness),
        ("relevance".into(), a.relevance),
        ("ctx_precision".into(), c.precision),
        ("ctx_recall".into(), c.recall),
        ("ctx_f1".into(), c.f1),
    ]))
}

/// Task 3 row: a report-mode research run scored by the judge.
pub fn score_task3(
    item: &Task3Item,
    env: &ResearchEnv,
    session: &str,
    runs: u32,
) -> Result<BTreeMap<String, f64>, BenchError> {
    let rec = run_research(&item.topic, env, session, None, Some(ReportMode::Report))?;
    let md = rec.report.as_ref().map(|r| r.to_markdown()).unwrap_or_default();
    let j = judge_report(&item.topic, &md, env.retriever.gateway(), runs)?;
    let mut scores = j.dimensions;
    scores.insert("mean".into(), j.mean);
    Ok(scores)
}

/// Evaluate every item of `dataset` (items in parallel, rows in file order).
pub fn run_task(task: u8, dataset: &Path, env: &ResearchEnv, cfg: &BenchConfig) -> Result<MetricReport, BenchError> {
    let snapshot = ConfigSnapshot {
        model_id: env.retriever.gateway().model_id().to_string(),
        seed: cfg.seed,
        k: cfg.k,
        match_threshold: cfg.match_threshold,
        judge_runs: cfg.judge_runs,
        dataset: dataset
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let rows = |scored: Vec<Result<(String, BTreeMap<String, f64>), BenchError>>| {
        scored
            .into_iter()
            .map(|r| r.map(|(id, scores)| MetricRow { id, scores }))
            .collect::<Result<Vec<_>, _>>()
    };
    match task {
        1 => {
            let items: Vec<Task1Item> = load_items(dataset)?;
            for it in &items {
                if let Some(p) = it.relevant_pids.iter().find(|p| env.retriever.object(p).is_none()) {
                    return Err(BenchError::Invalid(format!("relevant pid {p} is not registered")));
                }
            }
            let scored = items
                .par_iter()
                .enumerate()
                .map(|(i, it)| Ok((item_id(&it.id, i), score_task1(it, env, cfg.k)?)))
                .collect();
            Ok(MetricReport::new(1, snapshot, &TASK1_COLUMNS, rows(scored)?))
        }
        2 => {
            let items: Vec<Task2Item> = load_items(dataset)?;
            let scored = items
                .par_iter()
                .enumerate()
                .map(|(i, it)| {
                    let id = item_id(&it.id, i);
                    let s = score_task2(it, env, &format!("bench-2-{id}"), cfg.match_threshold)?;
                    Ok((id, s))
                })
                .collect();
            Ok(MetricReport::new(2, snapshot, &TASK2_COLUMNS, rows(scored)?))
        }
        3 => {
            let items: Vec<Task3Item> = load_items(dataset)?;
            let scored = items
                .par_iter()
                .enumerate()
                .map(|(i, it)| {
                    let id = item_id(&it.id, i);
                    let s = score_task3(it, env, &format!("bench-3-{id}"), cfg.judge_runs)?;
                    Ok((id, s))
                })
                .collect();
            let mut cols: Vec<&str> = JUDGE_DIMENSIONS.to_vec();
            cols.push("mean");
            Ok(MetricReport::new(3, snapshot, &cols, rows(scored)?))
        }
        other => Err(BenchError::UnknownTask(other.to_string())),
    }
}
