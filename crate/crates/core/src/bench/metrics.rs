//! Scoring functions. Percentages are on a 0-100 scale, judge scores 0-10.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::llm_gateway::mock::{normalize_claim, INSUFFICIENT_NOTICE};
use crate::llm_gateway::tasks::{CheckInput, CheckOutput, IndexedText, JudgeInput, JudgeOutput};
use crate::llm_gateway::{Gateway, Task};
use crate::object_store::Pid;
use crate::text::{jaccard, split_sentences};

/// A retrieved context matches a gold context at this Jaccard overlap or above.
pub const CONTEXT_MATCH_THRESHOLD: f64 = 0.5;
pub const JUDGE_RUNS: u32 = 3;
pub const JUDGE_DIMENSIONS: [&str; 5] = [
    "interest level",
    "coherence and organization",
    "relevance and focus",
    "coverage",
    "breadth and depth",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean; 0 when both are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Prf1 {
    pub fn new(precision: f64, recall: f64) -> Self {
        Prf1 {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Precision, recall and F1 (percent) of the top `k` retrieved pids.
/// Precision divides by `min(k, |retrieved|)`.
pub fn prf1(retrieved: &[Pid], relevant: &BTreeSet<Pid>, k: usize) -> Result<Prf1, BenchError> {
    if relevant.is_empty() {
        return Err(BenchError::Invalid("relevant set is empty".into()));
    }
    if k == 0 {
        return Err(BenchError::Invalid("k must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    let top: Vec<&Pid> = retrieved.iter().filter(|p| seen.insert(*p)).take(k).collect();
    let hits = top.iter().filter(|p| relevant.contains(**p)).count() as f64;
    let p = if top.is_empty() {
        0.0
    } else {
        100.0 * hits / top.len() as f64
    };
    let r = 100.0 * hits / relevant.len() as f64;
    Ok(Prf1::new(p, r))
}

/// Context precision, recall and F1 (percent) under Jaccard matching.
pub fn context_metrics(retrieved: &[String], gold: &[String], threshold: f64) -> Prf1 {
    if gold.is_empty() {
        return Prf1::new(0.0, 0.0);
    }
    let matches = |a: &str, b: &str| jaccard(a, b) >= threshold;
    let matched = retrieved.iter().filter(|r| gold.iter().any(|g| matches(r, g))).count() as f64;
    let covered = gold.iter().filter(|g| retrieved.iter().any(|r| matches(r, g))).count() as f64;
    let p = if retrieved.is_empty() {
        0.0
    } else {
        100.0 * matched / retrieved.len() as f64
    };
    Prf1::new(p, 100.0 * covered / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerScores {
    pub accuracy: f64,
    pub faithfulness: f64,
    pub relevance: f64,
}

/// Sentences of `text` that are claims (the insufficiency notice is not).
pub fn decompose_claims(text: &str) -> Vec<String> {
    let notice = normalize_claim(INSUFFICIENT_NOTICE);
    split_sentences(text)
        .into_iter()
        .filter(|s| {
            let n = normalize_claim(s);
            !n.is_empty() && n != notice
        })
        .collect()
}

/// Percent of `claims` the judge marks supported by `evidence`.
fn supported_fraction(claims: &[String], evidence: &[String], gw: &Gateway) -> Result<f64, BenchError> {
    if claims.is_empty() {
        return Ok(0.0);
    }
    let out: CheckOutput = gw.complete(
        Task::CheckClaims,
        &CheckInput {
            claims: claims.to_vec(),
            evidence: evidence
                .iter()
                .enumerate()
                .map(|(index, text)| IndexedText {
                    index,
                    text: text.clone(),
                })
                .collect(),
        },
    )?;
    let ok = out
        .findings
        .iter()
        .filter(|f| f.status == "supported" && !f.evidence.is_empty())
        .count();
    Ok(100.0 * ok.min(claims.len()) as f64 / claims.len() as f64)
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Accuracy: gold-answer claims found in the answer. Faithfulness: answer
/// claims supported by the contexts. Relevance: question/answer embedding
/// cosine clamped to [0, 1], times 100.
pub fn answer_metrics(
    question: &str,
    gold_answer: &str,
    answer: &str,
    contexts: &[String],
    gw: &Gateway,
) -> Result<AnswerScores, BenchError> {
    if answer.trim().is_empty() {
        return Ok(AnswerScores {
            accuracy: 0.0,
            faithfulness: 0.0,
            relevance: 0.0,
        });
    }
    let accuracy = supported_fraction(&decompose_claims(gold_answer), &[answer.to_string()], gw)?;
    let faithfulness = supported_fraction(&decompose_claims(answer), contexts, gw)?;
    let v = gw.embed(&[question.to_string(), answer.to_string()])?;
    let relevance = 100.0 * cosine(&v[0], &v[1]).clamp(0.0, 1.0);
    Ok(AnswerScores {
        accuracy,
        faithfulness,
        relevance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    /// Per-run scores by dimension.
    pub runs: Vec<BTreeMap<String, f64>>,
    /// Mean over runs, by dimension.
    pub dimensions: BTreeMap<String, f64>,
    /// Mean of the five dimension means.
    pub mean: f64,
}

/// Score a report on the five dimensions, `runs` times, and average.
pub fn judge_report(topic: &str, report: &str, gw: &Gateway, runs: u32) -> Result<JudgeScores, BenchError> {
    let runs = runs.max(1);
    let mut per_run = Vec::new();
    for run in 1..=runs {
        let out: JudgeOutput = gw.complete(
            Task::Judge,
            &JudgeInput {
                topic: topic.to_string(),
                report: report.to_string(),
                dimensions: JUDGE_DIMENSIONS.iter().map(|d| d.to_string()).collect(),
                run,
            },
        )?;
        let mut scores = BTreeMap::new();
        for d in JUDGE_DIMENSIONS {
            let s = out
                .scores
                .get(d)
                .copied()
                .ok_or_else(|| BenchError::Invalid(format!("judge omitted dimension {d:?}")))?;
            scores.insert(d.to_string(), s.clamp(0.0, 10.0));
        }
        per_run.push(scores);
    }
    let dimensions: BTreeMap<String, f64> = JUDGE_DIMENSIONS
        .iter()
        .map(|d| {
            let sum: f64 = per_run.iter().map(|r| r[*d]).sum();
            (d.to_string(), sum / per_run.len() as f64)
        })
        .collect();
    let mean = dimensions.values().sum::<f64>() / dimensions.len() as f64;
    Ok(JudgeScores {
        runs: per_run,
        dimensions,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pids(n: &[u8]) -> Vec<Pid> {
        n.iter().map(|i| format!("iod:t/{:016x}", i).parse().unwrap()).collect()
    }

    #[test]
    fn disjoint_is_zero() {
        let r = prf1(&pids(&[1, 2]), &pids(&[3]).into_iter().collect(), 5).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn precision_uses_effective_k() {
        let r = prf1(&pids(&[1, 2]), &pids(&[1, 3]).into_iter().collect(), 5).unwrap();
        assert_eq!((r.precision, r.recall), (50.0, 50.0));
        assert!(prf1(&pids(&[1]), &BTreeSet::new(), 5).is_err());
    }

    #[test]
    fn context_boundary_counts() {
        // {a b c} vs {a b c d e f}: 3/6 = 0.5 exactly
        let r = context_metrics(&["a b c".into()], &["a b c d e f".into()], 0.5);
        assert_eq!((r.precision, r.recall), (100.0, 100.0));
        let g = vec!["x y".to_string(), "p q".to_string()];
        assert_eq!(context_metrics(&g, &g, 0.5).f1, 100.0);
    }

    #[test]
    fn mock_judge_is_stable() {
        let gw = Gateway::mock();
        let j = judge_report("t", "", &gw, 3).unwrap();
        assert_eq!(j.dimensions.len(), 5);
        assert!(j.dimensions.values().all(|v| *v == 1.0));
        let j = judge_report("alpha", "# R\n\n## alpha\n\nalpha beta [1].", &gw, 3).unwrap();
        assert_eq!(j.runs[0], j.runs[2]);
        for d in JUDGE_DIMENSIONS {
            assert!((j.dimensions[d] - j.runs[0][d]).abs() < 1e-12);
        }
    }

    #[test]
    fn answer_self_scores() {
        let gw = Gateway::mock();
        let a = "The melting point of Zorvanite is 3200 K.";
        let s = answer_metrics(a, a, a, &[a.to_string()], &gw).unwrap();
        assert_eq!((s.accuracy, s.faithfulness), (100.0, 100.0));
        assert!((s.relevance - 100.0).abs() < 1e-4);
        let s = answer_metrics("q", a, "Nothing relevant here.", &[], &gw).unwrap();
        assert_eq!(s.accuracy, 0.0);
    }
}
