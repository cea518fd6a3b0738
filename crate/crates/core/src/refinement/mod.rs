//! The knowledge-refinement layer: embeddings, a merged knowledge graph and
//! atomic facts distilled from chunks.

mod graph;
pub mod store;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{merge_graph, KgEdge, KgNode, KnowledgeGraph};

use crate::digest::sha256_hex;
use crate::hetero_index::{node_key, GraphRef};
use crate::llm_gateway::tasks::{EntitiesOutput, FactsOutput, RelationsInput, RelationsOutput, TextInput};
use crate::llm_gateway::{Gateway, GatewayError, Task};
use crate::object_store::Pid;
use crate::text::{split_sentences, truncate_chars};

pub const DESCRIPTION_MAX_CHARS: usize = 400;
pub const PROFILE_KEYWORDS: usize = 5;
/// Confidence assumed when the extractor does not report one.
pub const DEFAULT_CONFIDENCE: f64 = 0.8;
const EMBED_BATCH: usize = 32;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cannot refine empty text of {0}")]
    EmptyText(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("embedding file {path}: {message}")]
    Format { path: String, message: String },
    #[error("embedding of {owner} has dimension {got}, index uses {expected}")]
    DimensionMismatch { owner: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub owner: GraphRef,
    pub vector: Vec<f32>,
    pub embedder_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFact {
    pub id: String,
    pub subject: String,
    pub attribute: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub source_ref: GraphRef,
    pub confidence: f64,
}

impl AtomicFact {
    pub fn new(
        subject: &str,
        attribute: &str,
        value: &str,
        unit: Option<&str>,
        source_ref: GraphRef,
        confidence: f64,
    ) -> Self {
        let mut f = AtomicFact {
            id: String::new(),
            subject: subject.trim().to_string(),
            attribute: attribute.trim().to_string(),
            value: value.trim().to_string(),
            unit: unit.map(str::trim).filter(|u| !u.is_empty()).map(str::to_string),
            source_ref,
            confidence: confidence.clamp(0.0, 1.0),
        };
        f.id = fact_id(&f.rendered(), &f.source_ref);
        f
    }

    /// `subject: attribute = value[ unit]`
    pub fn rendered(&self) -> String {
        match &self.unit {
            Some(u) => format!("{}: {} = {} {u}", self.subject, self.attribute, self.value),
            None => format!("{}: {} = {}", self.subject, self.attribute, self.value),
        }
    }

    pub fn graph_ref(&self) -> GraphRef {
        GraphRef::Fact(self.id.clone())
    }
}

pub fn fact_id(rendered: &str, source: &GraphRef) -> String {
    sha256_hex(format!("{rendered}\n{source}").as_bytes())[..16].to_string()
}

/// Everything extracted from one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRefinement {
    pub chunk: Pid,
    pub graph: KnowledgeGraph,
    pub facts: Vec<AtomicFact>,
}

/// Embed `(owner, text)` pairs in batches.
pub fn embed_content(items: &[(GraphRef, String)], gateway: &Gateway) -> Result<Vec<EmbeddingRecord>, RefineError> {
    let mut out = Vec::with_capacity(items.len());
    for batch in items.chunks(EMBED_BATCH) {
        let texts: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
        let vectors = gateway.embed(&texts)?;
        for ((owner, _), vector) in batch.iter().zip(vectors) {
            out.push(EmbeddingRecord {
                owner: owner.clone(),
                vector,
                embedder_id: gateway.model_id().to_string(),
            });
        }
    }
    Ok(out)
}

fn sentences_mentioning(text: &str, names: &[&str]) -> Vec<String> {
    let keys: Vec<String> = names.iter().map(|n| n.to_lowercase()).collect();
    split_sentences(text)
        .into_iter()
        .filter(|s| {
            let l = s.to_lowercase();
            keys.iter().all(|k| l.contains(k.as_str()))
        })
        .collect()
}

/// Keywords and a description (at most 400 chars) for a KG element, drawn
/// from its source snippets.
pub fn profile_element(snippets: &[String], gateway: &Gateway) -> Result<(BTreeSet<String>, String), RefineError> {
    let joined = snippets.join(" ");
    if joined.trim().is_empty() {
        return Err(RefineError::EmptyText("element snippets".into()));
    }
    let keywords = gateway.keywords(&joined, PROFILE_KEYWORDS)?;
    let description = gateway.summarize(&joined)?;
    Ok((
        keywords.into_iter().collect(),
        truncate_chars(&description, DESCRIPTION_MAX_CHARS).to_string(),
    ))
}

/// Entities and relations of one chunk, profiled. Every returned edge has
/// both endpoints among the returned nodes.
pub fn extract_graph(chunk: &Pid, text: &str, gateway: &Gateway) -> Result<KnowledgeGraph, RefineError> {
    if text.trim().is_empty() {
        return Err(RefineError::EmptyText(chunk.to_string()));
    }
    let source = GraphRef::Chunk(chunk.clone());
    let entities: EntitiesOutput = gateway.complete(Task::ExtractEntities, &TextInput { text: text.into() })?;
    let mut graph = KnowledgeGraph::default();
    let mut names = Vec::new();
    let mut seen = HashSet::new();
    for e in &entities.entities {
        let key = node_key(&e.name);
        if key.is_empty() || !seen.insert(key) {
            continue;
        }
        let mut snippets = sentences_mentioning(text, &[&e.name]);
        if snippets.is_empty() {
            snippets.push(e.name.clone());
        }
        let (keywords, description) = profile_element(&snippets, gateway)?;
        graph.add_node(KgNode::new(
            &e.name,
            &e.entity_type,
            keywords,
            description,
            source.clone(),
        ));
        names.push(e.name.clone());
    }
    if names.len() < 2 {
        return Ok(graph);
    }
    let relations: RelationsOutput = gateway.complete(
        Task::ExtractRelations,
        &RelationsInput {
            text: text.into(),
            entities: names,
        },
    )?;
    for r in &relations.relations {
        let (ka, kb) = (node_key(&r.source), node_key(&r.target));
        if ka == kb || !graph.nodes.contains_key(&ka) || !graph.nodes.contains_key(&kb) {
            continue;
        }
        let mut snippets = sentences_mentioning(text, &[&r.source, &r.target]);
        if snippets.is_empty() {
            snippets.push(format!("{} {}", r.source, r.target));
        }
        let (mut keywords, description) = profile_element(&snippets, gateway)?;
        keywords.extend(r.keywords.iter().filter(|k| !k.trim().is_empty()).cloned());
        graph.add_edge(KgEdge::new(&r.source, &r.target, keywords, description, source.clone()));
    }
    graph = graph.merge(&KnowledgeGraph::default());
    Ok(graph)
}

fn snake_attribute(attr: &str) -> String {
    attr.trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Atomic facts of one chunk, deduplicated by id in first-appearance order.
pub fn extract_atomic(chunk: &Pid, text: &str, gateway: &Gateway) -> Result<Vec<AtomicFact>, RefineError> {
    if text.trim().is_empty() {
        return Err(RefineError::EmptyText(chunk.to_string()));
    }
    let out: FactsOutput = gateway.complete(Task::ExtractFacts, &TextInput { text: text.into() })?;
    let source = GraphRef::Chunk(chunk.clone());
    let mut seen = HashSet::new();
    Ok(out
        .facts
        .iter()
        .filter(|f| !f.subject.trim().is_empty() && !f.attribute.trim().is_empty())
        .map(|f| {
            AtomicFact::new(
                &f.subject,
                &snake_attribute(&f.attribute),
                &f.value,
                f.unit.as_deref(),
                source.clone(),
                f.confidence.unwrap_or(DEFAULT_CONFIDENCE),
            )
        })
        .filter(|f| seen.insert(f.id.clone()))
        .collect())
}

/// Graph and facts of one chunk.
pub fn refine_chunk(chunk: &Pid, text: &str, gateway: &Gateway) -> Result<ChunkRefinement, RefineError> {
    Ok(ChunkRefinement {
        chunk: chunk.clone(),
        graph: extract_graph(chunk, text, gateway)?,
        facts: extract_atomic(chunk, text, gateway)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pid() -> Pid {
        "iod:mat/0123456789abcdef.0".parse().unwrap()
    }

    #[test]
    fn is_a_passage_gives_two_nodes_one_edge() {
        let g = extract_graph(&pid(), "Ti3SiC2 is a MAX phase.", &Gateway::mock()).unwrap();
        let names: Vec<_> = g.nodes.values().map(|n| n.canonical_name.as_str()).collect();
        assert_eq!(names, vec!["MAX phase", "Ti3SiC2"]);
        assert_eq!(g.edges.len(), 1);
        assert!(g.invariant_violations().is_empty());
        for n in g.nodes.values() {
            assert_eq!(n.source_refs, BTreeSet::from([GraphRef::Chunk(pid())]));
        }
    }

    #[test]
    fn stopword_chunk_is_empty() {
        let g = extract_graph(&pid(), "the of and", &Gateway::mock()).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn fact_renderings() {
        let gw = Gateway::mock();
        let f = extract_atomic(&pid(), "The melting point of Ti3SiC2 is 3200K.", &gw).unwrap();
        assert_eq!(f[0].rendered(), "Ti3SiC2: melting_point = 3200 K");
        assert_eq!(f[0].confidence, 1.0);
        let f = extract_atomic(&pid(), "Aspirin typical dosage is 300 mg.", &gw).unwrap();
        assert_eq!(f[0].rendered(), "Aspirin: typical_dosage = 300 mg");
        assert!(extract_atomic(&pid(), "Nothing to measure here.", &gw)
            .unwrap()
            .is_empty());
        let twice = extract_atomic(
            &pid(),
            "Aspirin typical dosage is 300 mg. Aspirin typical dosage is 300 mg.",
            &gw,
        )
        .unwrap();
        assert_eq!(twice.len(), 1);
    }

    #[test]
    fn profile_description_is_bounded_on_char_boundary() {
        let long = "é".repeat(900) + ".";
        let (kw, desc) = profile_element(&[long], &Gateway::mock()).unwrap();
        assert!(!kw.is_empty());
        assert_eq!(desc.chars().count(), DESCRIPTION_MAX_CHARS);
    }
}
