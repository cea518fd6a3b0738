//! Deterministic stand-in for the model endpoint.
//!
//! Every response is a pure function of the request. The dispatch rules are
//! part of the test contract (see `docs/gateway.md`):
//!
//! | task | rule |
//! |------|------|
//! | summarize | first two sentences |
//! | keywords | top-`max` non-stopword tokens by frequency |
//! | hypothetical_questions | one question per top-3 keyword |
//! | classify | domain plus top keyword |
//! | describe_media | `"{kind} object, {N} bytes, source {title}"` |
//! | extract_entities | `X is a Y` patterns, then capitalized spans (not units after numbers) |
//! | extract_relations | entity pairs sharing a sentence |
//! | extract_facts | `A of S is V`, `S: a = b`, `S attr is N unit` |
//! | plan | clarify if < 5 tokens and no domain keyword, else search + write |
//! | filter_relevance | query token overlap ≥ 0.2 |
//! | summarize_evidence | best-overlapping sentence per item |
//! | write | one section per input section, points with markers |
//! | check_claims | case-insensitive containment in evidence |
//! | judge | rubric on length, structure, citations, topic hits |

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::tasks::*;
use super::{GatewayError, GatewayRequest, ModelBackend};
use crate::digest::fnv1a64;
use crate::text::{
    content_token_set, content_tokens, is_stopword, normalize_ws, query_overlap, split_sentences, tokenize,
    top_keywords, truncate_chars,
};

pub const MOCK_MODEL_ID: &str = "mock-v1";
pub const INSUFFICIENT_NOTICE: &str =
    "The indexed corpus did not yield sufficient evidence for this part of the request.";
pub const RELEVANCE_THRESHOLD: f64 = 0.2;
pub const JUDGE_FLOOR: f64 = 1.0;

const DIRECTIVE_PREFIXES: &[&str] = &[
    "write a report on ",
    "write a report about ",
    "write a report covering ",
    "report on ",
    "report about ",
    "summarize ",
    "summarise ",
    "tell me about ",
    "research ",
];

#[derive(Debug, Clone)]
pub struct MockBackend {
    dim: usize,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        MockBackend { dim }
    }
}

fn input<T: DeserializeOwned>(req: &GatewayRequest) -> Result<T, GatewayError> {
    serde_json::from_value(req.input.clone()).map_err(|e| GatewayError::InvalidRequest {
        task: req.task,
        message: e.to_string(),
    })
}

fn out<T: Serialize>(v: &T) -> Result<String, GatewayError> {
    Ok(serde_json::to_string(v).expect("mock outputs serialize"))
}

impl ModelBackend for MockBackend {
    fn model_id(&self) -> &str {
        MOCK_MODEL_ID
    }

    fn complete(&self, req: &GatewayRequest) -> Result<String, GatewayError> {
        match req.task {
            Task::Summarize => {
                let i: TextInput = input(req)?;
                out(&SummaryOutput {
                    summary: mock_summary(&i.text),
                })
            }
            Task::Keywords => {
                let i: KeywordsInput = input(req)?;
                out(&KeywordsOutput {
                    keywords: top_keywords(&i.text, i.max),
                })
            }
            Task::HypotheticalQuestions => {
                let i: TextInput = input(req)?;
                out(&QuestionsOutput {
                    questions: top_keywords(&i.text, 3)
                        .into_iter()
                        .map(|k| format!("What is known about {k}?"))
                        .collect(),
                })
            }
            Task::Classify => {
                let i: ClassifyInput = input(req)?;
                let mut labels = vec![i.domain.clone()];
                if let Some(k) = top_keywords(&i.text, 1).into_iter().next() {
                    let k = k.to_lowercase();
                    if k != i.domain {
                        labels.push(k);
                    }
                }
                out(&LabelsOutput { labels })
            }
            Task::DescribeMedia => {
                let i: DescribeMediaInput = input(req)?;
                out(&DescriptionOutput {
                    description: format!("{} object, {} bytes, source {}", i.kind, i.byte_len, i.title),
                })
            }
            Task::ExtractEntities => {
                let i: TextInput = input(req)?;
                out(&EntitiesOutput {
                    entities: mock_entities(&i.text),
                })
            }
            Task::ExtractRelations => {
                let i: RelationsInput = input(req)?;
                out(&RelationsOutput {
                    relations: mock_relations(&i.text, &i.entities),
                })
            }
            Task::ExtractFacts => {
                let i: TextInput = input(req)?;
                out(&FactsOutput {
                    facts: mock_facts(&i.text),
                })
            }
            Task::Plan => {
                let i: PlanInput = input(req)?;
                out(&mock_plan(&i))
            }
            Task::FilterRelevance => {
                let i: RelevanceInput = input(req)?;
                out(&RelevanceOutput {
                    relevant: i
                        .items
                        .iter()
                        .filter(|it| query_overlap(&i.query, &it.text) >= RELEVANCE_THRESHOLD)
                        .map(|it| it.id.clone())
                        .collect(),
                })
            }
            Task::SummarizeEvidence => {
                let i: EvidenceInput = input(req)?;
                out(&mock_evidence(&i))
            }
            Task::Write => {
                let i: WriteInput = input(req)?;
                out(&mock_write(&i))
            }
            Task::CheckClaims => {
                let i: CheckInput = input(req)?;
                out(&mock_check(&i))
            }
            Task::Judge => {
                let i: JudgeInput = input(req)?;
                out(&mock_judge(&i))
            }
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        texts.iter().map(|t| hash_embed(t, self.dim)).collect()
    }
}

/// Token-hashing embedding: FNV-1a of each token picks a bucket, bucket
/// counts are L2-normalized. Stopwords are skipped unless nothing else remains.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f32>, GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::EmptyText);
    }
    let mut toks = content_tokens(text);
    if toks.is_empty() {
        toks = tokenize(text);
    }
    if toks.is_empty() {
        toks = vec![text.trim().to_string()];
    }
    let mut counts = vec![0f64; dim];
    for t in &toks {
        counts[(fnv1a64(t.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(counts.into_iter().map(|c| (c / norm) as f32).collect())
}

pub fn mock_summary(text: &str) -> String {
    split_sentences(text).into_iter().take(2).collect::<Vec<_>>().join(" ")
}

struct Word<'a> {
    text: &'a str,
    breaks_after: bool,
}

fn words_of(sentence: &str) -> Vec<Word<'_>> {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                return None;
            }
            let breaks_after = raw.chars().last().is_some_and(|c| !c.is_alphanumeric() && c != ')');
            Some(Word {
                text: trimmed,
                breaks_after,
            })
        })
        .collect()
}

fn is_capitalized(w: &str) -> bool {
    w.chars().next().is_some_and(char::is_uppercase) && !is_stopword(&w.to_lowercase())
}

fn strongly_capitalized(w: &str) -> bool {
    w.chars().skip(1).any(|c| c.is_uppercase() || c.is_ascii_digit())
}

fn is_content(w: &str) -> bool {
    !is_stopword(&w.to_lowercase())
}

/// `X is a Y` pairs as (subject word range, object word range).
fn is_a_patterns(words: &[Word<'_>]) -> Vec<((usize, usize), (usize, usize))> {
    let mut found = Vec::new();
    for i in 1..words.len().saturating_sub(2) {
        if !words[i].text.eq_ignore_ascii_case("is") || words[i].breaks_after {
            continue;
        }
        let art = words[i + 1].text.to_lowercase();
        if (art != "a" && art != "an") || words[i + 1].breaks_after {
            continue;
        }
        if words[i - 1].breaks_after {
            continue;
        }
        let mut s = i;
        while s > 0 && i - s < 4 && is_content(words[s - 1].text) && (s == i || !words[s - 1].breaks_after) {
            s -= 1;
        }
        let mut e = i + 2;
        while e < words.len() && e - (i + 2) < 4 && is_content(words[e].text) {
            e += 1;
            if words[e - 1].breaks_after {
                break;
            }
        }
        if s < i && e > i + 2 {
            found.push(((s, i), (i + 2, e)));
        }
    }
    found
}

fn join_words(words: &[Word<'_>], range: (usize, usize)) -> String {
    words[range.0..range.1]
        .iter()
        .map(|w| w.text)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn mock_entities(text: &str) -> Vec<EntityOut> {
    let mut out: Vec<EntityOut> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut descriptions: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let sentences = split_sentences(text);
    for sentence in &sentences {
        let words = words_of(sentence);
        let mut covered = vec![false; words.len()];
        let mut add = |name: String, ty: &str, out: &mut Vec<EntityOut>| {
            let key = name.to_lowercase();
            if seen.insert(key) {
                out.push(EntityOut {
                    name,
                    entity_type: ty.to_string(),
                    description: String::new(),
                });
            }
        };
        for (subj, obj) in is_a_patterns(&words) {
            for k in subj.0..subj.1 {
                covered[k] = true;
            }
            for k in obj.0..obj.1 {
                covered[k] = true;
            }
            add(join_words(&words, subj), "entity", &mut out);
            add(join_words(&words, obj), "concept", &mut out);
        }
        let mut k = 0;
        while k < words.len() {
            if covered[k] || !is_capitalized(words[k].text) {
                k += 1;
                continue;
            }
            let start = k;
            while k < words.len() && !covered[k] && is_capitalized(words[k].text) {
                k += 1;
                if words[k - 1].breaks_after {
                    break;
                }
            }
            let single_initial = start == 0 && k == 1;
            if single_initial && !strongly_capitalized(words[0].text) {
                continue;
            }
            let after_number = start > 0 && words[start - 1].text.parse::<f64>().is_ok();
            if after_number && k == start + 1 {
                continue;
            }
            add(join_words(&words, (start, k)), "entity", &mut out);
        }
    }
    for e in &out {
        let key = e.name.to_lowercase();
        for s in &sentences {
            if contains_phrase(s, &e.name) {
                descriptions.entry(key.clone()).or_default().push(s.clone());
            }
        }
    }
    for e in &mut out {
        if let Some(ds) = descriptions.get(&e.name.to_lowercase()) {
            e.description = truncate_chars(&ds.join(" "), 400).to_string();
        }
    }
    out
}

/// Case-insensitive whole-word phrase containment.
fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let h = tokenize(haystack);
    let p = tokenize(phrase);
    !p.is_empty() && h.windows(p.len()).any(|w| w == p.as_slice())
}

pub fn mock_relations(text: &str, entities: &[String]) -> Vec<RelationOut> {
    let mut by_pair: BTreeMap<(String, String), (String, String, BTreeSet<String>, String)> = BTreeMap::new();
    for sentence in split_sentences(text) {
        let words = words_of(&sentence);
        let is_a: Vec<(String, String)> = is_a_patterns(&words)
            .into_iter()
            .map(|(s, o)| {
                (
                    join_words(&words, s).to_lowercase(),
                    join_words(&words, o).to_lowercase(),
                )
            })
            .collect();
        let present: Vec<&String> = entities.iter().filter(|e| contains_phrase(&sentence, e)).collect();
        for (a_i, a) in present.iter().enumerate() {
            for b in present.iter().skip(a_i + 1) {
                let (la, lb) = (a.to_lowercase(), b.to_lowercase());
                if la == lb || contains_phrase(a, b) || contains_phrase(b, a) {
                    continue;
                }
                let key = if la < lb {
                    (la.clone(), lb.clone())
                } else {
                    (lb.clone(), la.clone())
                };
                let kw = if is_a
                    .iter()
                    .any(|(s, o)| (s == &la && o == &lb) || (s == &lb && o == &la))
                {
                    "is_a"
                } else {
                    "co_occurs"
                };
                let entry = by_pair
                    .entry(key)
                    .or_insert_with(|| ((*a).clone(), (*b).clone(), BTreeSet::new(), sentence.clone()));
                entry.2.insert(kw.to_string());
            }
        }
    }
    by_pair
        .into_values()
        .map(|(source, target, keywords, description)| RelationOut {
            source,
            target,
            keywords: keywords.into_iter().collect(),
            description,
        })
        .collect()
}

struct FactPatterns {
    attr_of: Regex,
    colon_eq: Regex,
    numeric: Regex,
    value_unit: Regex,
}

fn fact_patterns() -> &'static FactPatterns {
    static P: OnceLock<FactPatterns> = OnceLock::new();
    P.get_or_init(|| FactPatterns {
        attr_of: Regex::new(
            r"(?:^|\b)(?:[Tt]he\s+)?([a-z][a-z]*(?:\s[a-z]+){0,3})\s+of\s+([A-Z][\w\-]*(?:\s[A-Z][\w\-]*){0,3})\s+(?:is|was|equals)\s+([^;,]+?)\s*[.;,]?$",
        )
        .unwrap(),
        colon_eq: Regex::new(
            r"^([A-Z][\w\-]*(?:\s[\w\-]+){0,3})\s*:\s*([a-z][\w]*(?:\s[a-z]\w*){0,3})\s*=\s*(.+?)\s*[.;]?$",
        )
        .unwrap(),
        numeric: Regex::new(
            r"^([A-Z][\w\-]*)\s+([a-z][a-z]*(?:\s[a-z]+){0,3})\s+(?:is|was|of)\s+([-+]?\d+(?:\.\d+)?\s*[A-Za-z%°µ/]*)\s*[.;]?$",
        )
        .unwrap(),
        value_unit: Regex::new(r"^([-+]?\d+(?:\.\d+)?)\s*([A-Za-z%°µ][A-Za-z%°µ/\d\^]*)?$").unwrap(),
    })
}

fn split_value(raw: &str) -> (String, Option<String>) {
    let raw = raw.trim().trim_end_matches(['.', ';', ',']);
    match fact_patterns().value_unit.captures(raw) {
        Some(c) => (c[1].to_string(), c.get(2).map(|m| m.as_str().to_string())),
        None => (raw.to_string(), None),
    }
}

fn snake(attr: &str) -> String {
    attr.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

pub fn mock_facts(text: &str) -> Vec<FactOut> {
    let p = fact_patterns();
    let mut facts = Vec::new();
    for sentence in split_sentences(text) {
        let s = sentence.trim();
        let hit = if let Some(c) = p.colon_eq.captures(s) {
            Some((c[1].trim().to_string(), snake(&c[2]), c[3].to_string()))
        } else if let Some(c) = p.attr_of.captures(s) {
            Some((c[2].trim().to_string(), snake(&c[1]), c[3].to_string()))
        } else if let Some(c) = p.numeric.captures(s) {
            if is_stopword(&c[1].to_lowercase()) {
                None
            } else {
                Some((c[1].to_string(), snake(&c[2]), c[3].to_string()))
            }
        } else {
            None
        };
        if let Some((subject, attribute, value)) = hit {
            let (value, unit) = split_value(&value);
            if subject.is_empty() || attribute.is_empty() || value.is_empty() {
                continue;
            }
            facts.push(FactOut {
                subject,
                attribute,
                value,
                unit,
                confidence: Some(1.0),
            });
        }
    }
    facts
}

/// Strip a leading directive ("report on ...") from a research request.
pub fn research_topic(query: &str) -> String {
    let q = query.trim();
    let lower = q.to_lowercase();
    for p in DIRECTIVE_PREFIXES {
        if lower.starts_with(p) {
            return q[p.len()..].trim().to_string();
        }
    }
    q.to_string()
}

fn mock_plan(i: &PlanInput) -> PlanOutput {
    let toks = tokenize(&i.query);
    let vocab: HashSet<String> = i.domain_keywords.iter().flat_map(|k| tokenize(k)).collect();
    let matches_domain = toks.iter().any(|t| vocab.contains(t));
    if toks.len() < 5 && !matches_domain {
        return PlanOutput {
            clarify: Some(ClarifyOut {
                question: format!(
                    "Your request \"{}\" is too brief to research. Which subject, domain or time range should the research cover?",
                    i.query.trim()
                ),
                missing: vec!["topic".into(), "domain".into()],
            }),
            steps: vec![],
        };
    }
    let topic = research_topic(&i.query);
    PlanOutput {
        clarify: None,
        steps: vec![
            PlanStepOut {
                kind: "search".into(),
                description: format!("Search the indexed corpus for: {topic}"),
                query: Some(topic.clone()),
                tier: Some("chunk".into()),
                strategy: Some("hybrid".into()),
                depends_on: vec![],
            },
            PlanStepOut {
                kind: "write".into(),
                description: "Write the answer from the gathered evidence".into(),
                query: None,
                tier: None,
                strategy: None,
                depends_on: vec![1],
            },
        ],
    }
}

fn mock_evidence(i: &EvidenceInput) -> EvidenceOutput {
    let mut points = Vec::new();
    let mut seen = HashSet::new();
    for item in &i.items {
        let mut best: Option<(f64, String)> = None;
        for s in split_sentences(&item.text) {
            let score = query_overlap(&i.query, &s);
            if score > 0.0 && best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, s));
            }
        }
        if let Some((_, s)) = best {
            if seen.insert(normalize_ws(&s)) {
                points.push(EvidencePointOut {
                    text: s,
                    source: item.index,
                });
            }
        }
    }
    EvidenceOutput {
        summary: points.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join(" "),
        points,
    }
}

fn marker_regex() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\s*\[\d+\]").unwrap())
}

/// Claim text with citation markers and trailing terminator removed.
pub fn normalize_claim(claim: &str) -> String {
    let stripped = marker_regex().replace_all(claim, "");
    let t = stripped
        .trim()
        .trim_end_matches(['.', '!', '?', '。', '！', '？'])
        .trim();
    normalize_ws(t)
}

fn mock_write(i: &WriteInput) -> WriteOutput {
    if let Some(draft) = &i.draft {
        let flagged: HashSet<String> = i
            .findings
            .iter()
            .filter(|f| f.status != "supported")
            .map(|f| normalize_claim(&f.claim))
            .collect();
        let sections = draft
            .sections
            .iter()
            .map(|s| {
                let kept: Vec<String> = split_sentences(&s.body)
                    .into_iter()
                    .filter(|sent| !flagged.contains(&normalize_claim(sent)))
                    .collect();
                let body = if kept.is_empty() {
                    INSUFFICIENT_NOTICE.to_string()
                } else {
                    kept.join(" ")
                };
                SectionOut {
                    heading: s.heading.clone(),
                    body,
                }
            })
            .collect();
        return WriteOutput {
            title: draft.title.clone(),
            sections,
        };
    }
    let direct = i.mode == "direct_answer";
    let title = if direct {
        format!("Answer: {}", i.query.trim())
    } else {
        format!("Report: {}", research_topic(&i.query))
    };
    let sections = i
        .sections
        .iter()
        .map(|s| {
            let body = if s.points.is_empty() {
                INSUFFICIENT_NOTICE.to_string()
            } else {
                s.points
                    .iter()
                    .map(|p| with_marker(&p.text, p.marker))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            SectionOut {
                heading: if direct { "Answer".into() } else { s.heading.clone() },
                body,
            }
        })
        .collect();
    WriteOutput { title, sections }
}

/// Place ` [n]` before the sentence terminator.
fn with_marker(sentence: &str, marker: usize) -> String {
    let t = sentence.trim();
    match t.char_indices().last() {
        Some((i, c)) if matches!(c, '.' | '!' | '?' | '。') => {
            format!("{} [{marker}]{}", &t[..i], c)
        }
        _ => format!("{t} [{marker}]."),
    }
}

fn mock_check(i: &CheckInput) -> CheckOutput {
    let evidence: Vec<(usize, String)> = i.evidence.iter().map(|e| (e.index, normalize_ws(&e.text))).collect();
    let findings = i
        .claims
        .iter()
        .map(|claim| {
            let c = normalize_claim(claim);
            let hits: Vec<usize> = if c.is_empty() {
                vec![]
            } else {
                evidence
                    .iter()
                    .filter(|(_, t)| t.contains(&c))
                    .map(|(idx, _)| *idx)
                    .collect()
            };
            FindingOut {
                claim: claim.clone(),
                status: if hits.is_empty() { "unsupported" } else { "supported" }.into(),
                evidence: hits,
            }
        })
        .collect();
    CheckOutput { findings }
}

fn mock_judge(i: &JudgeInput) -> JudgeOutput {
    let report = i.report.trim();
    let mut scores = BTreeMap::new();
    if report.is_empty() {
        for d in &i.dimensions {
            scores.insert(d.clone(), JUDGE_FLOOR);
        }
        return JudgeOutput { scores };
    }
    let words = tokenize(report).len() as f64;
    let length = (words / 300.0).min(1.0);
    let sections = report.lines().filter(|l| l.starts_with("## ")).count() as f64;
    let structure = (sections / 3.0).min(1.0);
    let cites = marker_regex().find_iter(report).count() as f64;
    let citation = (cites / 5.0).min(1.0);
    let topic = content_token_set(&i.topic);
    let body = content_token_set(report);
    let hit = if topic.is_empty() {
        0.0
    } else {
        topic.intersection(&body).count() as f64 / topic.len() as f64
    };
    let vocab = (body.len() as f64 / 150.0).min(1.0);
    let scale = |x: f64| ((JUDGE_FLOOR + 9.0 * x) * 100.0).round() / 100.0;
    for d in &i.dimensions {
        let x = match d.as_str() {
            "interest level" => 0.5 * length + 0.5 * citation,
            "coherence and organization" => 0.5 * structure + 0.5 * length,
            "relevance and focus" => hit,
            "coverage" => 0.5 * hit + 0.5 * citation,
            "breadth and depth" => 0.5 * vocab + 0.5 * structure,
            _ => (length + structure + citation + hit) / 4.0,
        };
        scores.insert(d.clone(), scale(x));
    }
    JudgeOutput { scores }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_is_first_two_sentences() {
        assert_eq!(mock_summary("A. B. C."), "A. B.");
    }

    #[test]
    fn is_a_sentence_yields_two_entities() {
        let e = mock_entities("Ti3SiC2 is a MAX phase.");
        let names: Vec<_> = e.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["Ti3SiC2", "MAX phase"]);
        let r = mock_relations("Ti3SiC2 is a MAX phase.", &["Ti3SiC2".into(), "MAX phase".into()]);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].keywords, vec!["is_a"]);
    }

    #[test]
    fn units_are_not_entities() {
        let e = mock_entities("The bulk modulus of Silbelium is 358 GPa and the melting point is 3200 K.");
        let names: Vec<_> = e.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, vec!["Silbelium"]);
    }

    #[test]
    fn stopword_passage_has_no_entities() {
        assert!(mock_entities("the of and").is_empty());
    }

    #[test]
    fn facts_from_measurement_sentences() {
        let f = mock_facts("The melting point of Ti3SiC2 is 3200K.");
        assert_eq!(f.len(), 1);
        assert_eq!(
            (
                f[0].subject.as_str(),
                f[0].attribute.as_str(),
                f[0].value.as_str(),
                f[0].unit.as_deref()
            ),
            ("Ti3SiC2", "melting_point", "3200", Some("K"))
        );
        let f = mock_facts("Aspirin typical dosage is 300 mg.");
        assert_eq!(
            (
                f[0].subject.as_str(),
                f[0].attribute.as_str(),
                f[0].value.as_str(),
                f[0].unit.as_deref()
            ),
            ("Aspirin", "typical_dosage", "300", Some("mg"))
        );
        let f = mock_facts("Ti3SiC2: melting_point = 3200K");
        assert_eq!(f[0].attribute, "melting_point");
        assert!(mock_facts("Nothing measurable happens here.").is_empty());
    }

    #[test]
    fn marker_goes_before_terminator() {
        assert_eq!(with_marker("A is B.", 3), "A is B [3].");
        assert_eq!(normalize_claim("A is B [3]."), "a is b");
    }

    #[test]
    fn directive_prefix_is_stripped() {
        assert_eq!(
            research_topic("report on Ti3SiC2 thermal properties"),
            "Ti3SiC2 thermal properties"
        );
    }
}
