//! Multi-granularity, multi-strategy search over the heterogeneous index.
//!
//! Tiers: `object` (L1 metadata), `chunk` (L2 text) and `fine` (facts and
//! KG elements). Strategies: BM25 keyword, exact cosine vector, KG graph
//! expansion, and reciprocal-rank fusion of all three.

mod bm25;
pub mod tools;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{idf, Bm25Index, B, K1};

use crate::hetero_index::{build_index, node_key, GraphRef, HeteroGraph, IndexError, LinkKind};
use crate::llm_gateway::{Gateway, GatewayError};
use crate::object_store::{DigitalObject, Level, Pid};
use crate::refinement::{AtomicFact, EmbeddingRecord, KnowledgeGraph};
use crate::text::{content_token_set, truncate_chars};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MAX_HOPS: usize = 2;
pub const RRF_K: f64 = 60.0;
pub const SNIPPET_MAX_CHARS: usize = 500;
/// Weight of a query token matched only through a node keyword (name
/// matches weigh 1).
pub const KEYWORD_SEED_WEIGHT: f64 = 0.5;
/// Minimum depth of each sub-strategy list fed into fusion.
const FUSION_DEPTH: usize = 50;
/// Top graph nodes whose names expand the keyword and vector queries in
/// hybrid search.
pub const EXPANSION_NODES: usize = 3;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("no embeddings indexed for the {0} tier")]
    NoEmbeddings(Tier),
    #[error("query embedding has dimension {got}, index uses {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{0} not found")]
    NotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Object,
    Chunk,
    Fine,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Object, Tier::Chunk, Tier::Fine];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Object => "object",
            Tier::Chunk => "chunk",
            Tier::Fine => "fine",
        }
    }

    fn of(r: &GraphRef) -> Tier {
        match r {
            GraphRef::Object(_) => Tier::Object,
            GraphRef::Chunk(_) => Tier::Chunk,
            _ => Tier::Fine,
        }
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Tier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "object" => Ok(Tier::Object),
            "chunk" => Ok(Tier::Chunk),
            "fine" => Ok(Tier::Fine),
            _ => Err(format!("unknown tier {s:?} (object, chunk, fine)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Keyword,
    Vector,
    Graph,
    Hybrid,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Keyword => "keyword",
            Strategy::Vector => "vector",
            Strategy::Graph => "graph",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "keyword" => Ok(Strategy::Keyword),
            "vector" => Ok(Strategy::Vector),
            "graph" => Ok(Strategy::Graph),
            "hybrid" => Ok(Strategy::Hybrid),
            _ => Err(format!("unknown strategy {s:?} (keyword, vector, graph, hybrid)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Filters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub before: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinds: Option<BTreeSet<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_allowlist: Option<BTreeSet<String>>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        *self == Filters::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub text: String,
    pub tier: Tier,
    pub strategy: Strategy,
    #[serde(default)]
    pub filters: Filters,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_max_hops")]
    pub max_hops: usize,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_max_hops() -> usize {
    DEFAULT_MAX_HOPS
}

impl RetrievalQuery {
    pub fn new(text: &str, tier: Tier, strategy: Strategy) -> Self {
        RetrievalQuery {
            text: text.to_string(),
            tier,
            strategy,
            filters: Filters::default(),
            top_k: DEFAULT_TOP_K,
            max_hops: DEFAULT_MAX_HOPS,
        }
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k;
        self
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.text.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        if self.top_k == 0 {
            return Err(RetrievalError::InvalidQuery("top_k must be at least 1".into()));
        }
        if let (Some(a), Some(b)) = (self.filters.after, self.filters.before) {
            if a > b {
                return Err(RetrievalError::InvalidQuery("after is later than before".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMetadata {
    /// Item type: an object kind, `chunk`, `node`, `edge` or `fact`.
    pub kind: String,
    /// Kind of the L1 object the item belongs to.
    pub object_kind: String,
    pub title: String,
    pub source: String,
    pub timestamp: DateTime<Utc>,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    #[serde(rename = "ref")]
    pub item_ref: GraphRef,
    pub score: f64,
    pub snippet: String,
    pub metadata: ItemMetadata,
    /// Pids from the item down to its L1 object (last element).
    pub provenance: Vec<Pid>,
}

impl RetrievedItem {
    pub fn l1(&self) -> &Pid {
        self.provenance.last().expect("provenance is never empty")
    }
}

/// True when `source` is covered by an allowlist entry: equal, same host,
/// a subdomain of the entry, or prefixed by it.
pub fn source_allowed(source: &str, allowlist: &BTreeSet<String>) -> bool {
    let host = source
        .split_once("://")
        .map(|(_, rest)| rest.split(['/', '?', '#']).next().unwrap_or(""))
        .map(|h| h.rsplit_once(':').map_or(h, |(h, _)| h))
        .unwrap_or("")
        .to_ascii_lowercase();
    allowlist.iter().any(|entry| {
        let e = entry.to_ascii_lowercase();
        source == entry
            || (!host.is_empty() && (host == e || host.ends_with(&format!(".{e}"))))
            || source.starts_with(entry.as_str())
    })
}

/// Remove items violating any active filter; order is preserved.
pub fn apply_filters(items: Vec<RetrievedItem>, filters: &Filters) -> Vec<RetrievedItem> {
    items.into_iter().filter(|it| passes(&it.metadata, filters)).collect()
}

fn passes(m: &ItemMetadata, f: &Filters) -> bool {
    f.domain.as_ref().is_none_or(|d| &m.domain == d)
        && f.after.is_none_or(|a| m.timestamp >= a)
        && f.before.is_none_or(|b| m.timestamp <= b)
        && f.kinds
            .as_ref()
            .is_none_or(|k| k.contains(&m.kind) || k.contains(&m.object_kind))
        && f.source_allowlist.as_ref().is_none_or(|a| source_allowed(&m.source, a))
}

/// Reciprocal-rank fusion: `score = Σ 1/(k + rank)` with ranks from 1,
/// sorted by descending score then ref order.
pub fn rrf_fuse(lists: &[Vec<GraphRef>], k: f64) -> Vec<(GraphRef, f64)> {
    let mut scores: BTreeMap<GraphRef, f64> = BTreeMap::new();
    for list in lists {
        for (i, r) in list.iter().enumerate() {
            *scores.entry(r.clone()).or_default() += 1.0 / (k + (i + 1) as f64);
        }
    }
    rank(scores.into_iter().collect())
}

/// Sort by descending score, ties by ascending ref.
pub fn rank(mut scored: Vec<(GraphRef, f64)>) -> Vec<(GraphRef, f64)> {
    scored.sort_by(|(ra, a), (rb, b)| b.total_cmp(a).then_with(|| ra.cmp(rb)));
    scored
}

/// Exhaustive cosine scan over unit vectors; top `k` by score then ref.
pub fn exact_top_k(query: &[f32], candidates: &[(GraphRef, Vec<f32>)], k: usize) -> Vec<(GraphRef, f64)> {
    let mut scored: Vec<(GraphRef, f64)> = candidates.iter().map(|(r, v)| (r.clone(), dot(query, v))).collect();
    scored = rank(scored);
    scored.truncate(k);
    scored
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

/// Everything the retriever indexes.
#[derive(Debug, Clone, Default)]
pub struct IndexData {
    /// L1 objects and chunks.
    pub objects: Vec<DigitalObject>,
    /// Text of every chunk and of every text-bearing L1 object.
    pub texts: BTreeMap<Pid, String>,
    pub kg: KnowledgeGraph,
    pub facts: Vec<AtomicFact>,
    pub embeddings: Vec<EmbeddingRecord>,
}

struct Entry {
    search_text: String,
    full_text: String,
    snippet: String,
    metadata: ItemMetadata,
    provenance: Vec<Pid>,
}

/// Read-only search engine over one built index.
pub struct Retriever {
    gateway: Arc<Gateway>,
    graph: HeteroGraph,
    kg: KnowledgeGraph,
    facts: BTreeMap<String, AtomicFact>,
    objects: BTreeMap<Pid, DigitalObject>,
    entries: BTreeMap<GraphRef, Entry>,
    bm25: HashMap<Tier, Bm25Index>,
    vectors: HashMap<Tier, Vec<(GraphRef, Vec<f32>)>>,
    dim: Option<usize>,
}

fn object_search_text(o: &DigitalObject, text: Option<&String>) -> String {
    let mut parts = vec![o.explicit_meta.title.clone()];
    match &o.enriched_meta {
        Some(em) => {
            parts.push(em.summary.clone());
            parts.extend(em.keywords.iter().cloned());
            parts.extend(em.hypothetical_questions.iter().cloned());
            parts.extend(em.multimodal_description.iter().cloned());
            parts.extend(em.refinement_highlights.iter().cloned());
        }
        None => parts.extend(text.map(|t| truncate_chars(t, SNIPPET_MAX_CHARS).to_string())),
    }
    parts.join("\n")
}

fn snippet(s: &str) -> String {
    truncate_chars(s.trim(), SNIPPET_MAX_CHARS).to_string()
}

impl Retriever {
    pub fn new(data: IndexData, gateway: Arc<Gateway>) -> Result<Self, RetrievalError> {
        let graph = build_index(&data.objects, &data.kg, &data.facts, &data.embeddings)?;
        let objects: BTreeMap<Pid, DigitalObject> = data.objects.into_iter().map(|o| (o.pid.clone(), o)).collect();
        let facts: BTreeMap<String, AtomicFact> = data.facts.into_iter().map(|f| (f.id.clone(), f)).collect();
        let mut r = Retriever {
            gateway,
            graph,
            kg: data.kg,
            facts,
            objects,
            entries: BTreeMap::new(),
            bm25: HashMap::new(),
            vectors: HashMap::new(),
            dim: None,
        };
        r.build_entries(&data.texts)?;
        for tier in Tier::ALL {
            let docs: Vec<(GraphRef, &str)> = r
                .entries
                .iter()
                .filter(|(k, _)| Tier::of(k) == tier && !matches!(k, GraphRef::Edge(..)))
                .map(|(k, e)| (k.clone(), e.search_text.as_str()))
                .collect();
            r.bm25.insert(tier, Bm25Index::build(docs));
        }
        for e in data.embeddings {
            if let Some(d) = r.dim {
                if d != e.vector.len() {
                    return Err(RetrievalError::DimensionMismatch {
                        expected: d,
                        got: e.vector.len(),
                    });
                }
            }
            r.dim = Some(e.vector.len());
            r.vectors
                .entry(Tier::of(&e.owner))
                .or_default()
                .push((e.owner, e.vector));
        }
        for v in r.vectors.values_mut() {
            v.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Ok(r)
    }

    fn metadata_for(&self, kind: &str, l1: &Pid) -> ItemMetadata {
        let o = &self.objects[l1];
        ItemMetadata {
            kind: kind.to_string(),
            object_kind: o.kind.as_str().to_string(),
            title: o.explicit_meta.title.clone(),
            source: o.explicit_meta.source.clone(),
            timestamp: o.explicit_meta.timestamp,
            domain: o.explicit_meta.domain.clone(),
        }
    }

    fn pid_chain(&self, r: &GraphRef) -> Result<Vec<Pid>, RetrievalError> {
        Ok(self
            .graph
            .provenance_chain(r)?
            .iter()
            .filter_map(|x| x.pid().cloned())
            .collect())
    }

    fn build_entries(&mut self, texts: &BTreeMap<Pid, String>) -> Result<(), RetrievalError> {
        let mut entries = BTreeMap::new();
        for o in self.objects.values() {
            let text = texts.get(&o.pid);
            match o.pid.level() {
                Level::L1 => {
                    let search_text = object_search_text(o, text);
                    let shown = o
                        .enriched_meta
                        .as_ref()
                        .map(|m| m.summary.clone())
                        .filter(|s| !s.trim().is_empty())
                        .unwrap_or_else(|| o.explicit_meta.title.clone());
                    entries.insert(
                        GraphRef::Object(o.pid.clone()),
                        Entry {
                            full_text: text.cloned().unwrap_or_else(|| search_text.clone()),
                            snippet: snippet(&shown),
                            metadata: self.metadata_for(o.kind.as_str(), &o.pid),
                            provenance: vec![o.pid.clone()],
                            search_text,
                        },
                    );
                }
                Level::L2 => {
                    let t = text.cloned().unwrap_or_default();
                    let parent = o.pid.parent().expect("L2 pid");
                    entries.insert(
                        GraphRef::Chunk(o.pid.clone()),
                        Entry {
                            snippet: snippet(&t),
                            search_text: t.clone(),
                            full_text: t,
                            metadata: self.metadata_for("chunk", &parent),
                            provenance: vec![o.pid.clone(), parent],
                        },
                    );
                }
            }
        }
        for n in self.kg.nodes.values() {
            let r = n.graph_ref();
            let provenance = self.pid_chain(&r)?;
            let kws: Vec<&str> = n.keywords.iter().map(String::as_str).collect();
            let text = format!("{} ({}): {}", n.canonical_name, n.entity_type, n.description);
            entries.insert(
                r,
                Entry {
                    search_text: format!("{} {}", n.canonical_name, kws.join(" ")),
                    snippet: snippet(&text),
                    full_text: text,
                    metadata: self.metadata_for("node", provenance.last().unwrap()),
                    provenance,
                },
            );
        }
        for e in self.kg.edges.values() {
            let r = e.graph_ref();
            let provenance = self.pid_chain(&r)?;
            let kws: Vec<&str> = e.keywords.iter().map(String::as_str).collect();
            let text = format!(
                "{} -- {} [{}]: {}",
                e.endpoints.0,
                e.endpoints.1,
                kws.join(", "),
                e.description
            );
            entries.insert(
                r,
                Entry {
                    search_text: text.clone(),
                    snippet: snippet(&text),
                    full_text: text,
                    metadata: self.metadata_for("edge", provenance.last().unwrap()),
                    provenance,
                },
            );
        }
        for f in self.facts.values() {
            let r = f.graph_ref();
            let provenance = self.pid_chain(&r)?;
            let text = f.rendered();
            entries.insert(
                r,
                Entry {
                    search_text: text.clone(),
                    snippet: snippet(&text),
                    full_text: text,
                    metadata: self.metadata_for("fact", provenance.last().unwrap()),
                    provenance,
                },
            );
        }
        self.entries = entries;
        Ok(())
    }

    pub fn graph(&self) -> &HeteroGraph {
        &self.graph
    }

    pub fn knowledge_graph(&self) -> &KnowledgeGraph {
        &self.kg
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn object(&self, pid: &Pid) -> Option<&DigitalObject> {
        self.objects.get(pid)
    }

    pub fn objects(&self) -> impl Iterator<Item = &DigitalObject> {
        self.objects.values()
    }

    pub fn fact(&self, id: &str) -> Option<&AtomicFact> {
        self.facts.get(id)
    }

    /// Full text behind a ref (chunk text, object text, rendered fact...).
    pub fn full_text(&self, r: &GraphRef) -> Option<&str> {
        self.entries.get(r).map(|e| e.full_text.as_str())
    }

    /// Keywords of all enriched objects and KG node names; what the
    /// planner treats as in-domain vocabulary.
    pub fn domain_vocabulary(&self) -> Vec<String> {
        let mut v: BTreeSet<String> = BTreeSet::new();
        for o in self.objects.values() {
            if let Some(em) = &o.enriched_meta {
                v.extend(em.keywords.iter().cloned());
            }
        }
        v.extend(self.kg.nodes.values().map(|n| n.canonical_name.clone()));
        v.into_iter().collect()
    }

    fn item(&self, r: &GraphRef, score: f64) -> RetrievedItem {
        let e = &self.entries[r];
        RetrievedItem {
            item_ref: r.clone(),
            score,
            snippet: e.snippet.clone(),
            metadata: e.metadata.clone(),
            provenance: e.provenance.clone(),
        }
    }

    fn finish(&self, scored: Vec<(GraphRef, f64)>, q: &RetrievalQuery, limit: usize) -> Vec<RetrievedItem> {
        rank(scored)
            .into_iter()
            .filter(|(r, _)| passes(&self.entries[r].metadata, &q.filters))
            .take(limit)
            .map(|(r, s)| self.item(&r, s))
            .collect()
    }

    /// Dispatch on the query's strategy.
    pub fn search(&self, q: &RetrievalQuery) -> Result<Vec<RetrievedItem>, RetrievalError> {
        q.validate()?;
        match q.strategy {
            Strategy::Keyword => self.keyword_search(q),
            Strategy::Vector => self.vector_search(q),
            Strategy::Graph => self.graph_search(q),
            Strategy::Hybrid => self.hybrid_search(q),
        }
    }

    fn keyword_scores(&self, q: &RetrievalQuery) -> Vec<(GraphRef, f64)> {
        self.bm25.get(&q.tier).map(|b| b.score(&q.text)).unwrap_or_default()
    }

    pub fn keyword_search(&self, q: &RetrievalQuery) -> Result<Vec<RetrievedItem>, RetrievalError> {
        q.validate()?;
        Ok(self.finish(self.keyword_scores(q), q, q.top_k))
    }

    /// Cosine scores for the tier. Chunk and object tiers also score
    /// through their finer elements: a chunk takes the max over its own
    /// vector and the facts/nodes it derives, an object the max over its own
    /// vector and its chunks.
    fn vector_scores(&self, q: &RetrievalQuery) -> Result<Vec<(GraphRef, f64)>, RetrievalError> {
        let nonempty = |t: Tier| self.vectors.get(&t).filter(|v| !v.is_empty());
        let tiers: Vec<Tier> = match q.tier {
            Tier::Fine => vec![Tier::Fine],
            Tier::Chunk => vec![Tier::Chunk, Tier::Fine],
            Tier::Object => vec![Tier::Object, Tier::Chunk, Tier::Fine],
        };
        if nonempty(q.tier).is_none() {
            return Err(RetrievalError::NoEmbeddings(q.tier));
        }
        let qv = self.gateway.embed_one(&q.text)?;
        let dim = self.dim.unwrap_or(qv.len());
        if qv.len() != dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: dim,
                got: qv.len(),
            });
        }
        let mut best: BTreeMap<GraphRef, f64> = BTreeMap::new();
        let mut bump = |r: GraphRef, s: f64| {
            let e = best.entry(r).or_insert(f64::NEG_INFINITY);
            *e = e.max(s);
        };
        for t in tiers {
            let Some(cands) = nonempty(t) else { continue };
            for (r, s) in exact_top_k(&qv, cands, cands.len()) {
                match (q.tier, t) {
                    (a, b) if a == b => bump(r, s),
                    (_, Tier::Fine) => {
                        for c in self.graph.deriving_chunks(&r) {
                            if q.tier == Tier::Object {
                                if let GraphRef::Chunk(p) = &c {
                                    bump(GraphRef::Object(p.parent().expect("L2 pid")), s);
                                }
                            } else {
                                bump(c, s);
                            }
                        }
                    }
                    (_, _) => {
                        if let GraphRef::Chunk(p) = &r {
                            bump(GraphRef::Object(p.parent().expect("L2 pid")), s);
                        }
                    }
                }
            }
        }
        Ok(rank(best.into_iter().collect()))
    }

    pub fn vector_search(&self, q: &RetrievalQuery) -> Result<Vec<RetrievedItem>, RetrievalError> {
        q.validate()?;
        Ok(self.finish(self.vector_scores(q)?, q, q.top_k))
    }

    /// Node scores: the sum over seeds of `overlap / (1 + hops)`, with hops
    /// the shortest distance from that seed.
    pub fn graph_node_scores(&self, text: &str, max_hops: usize) -> BTreeMap<String, f64> {
        let q = content_token_set(text);
        let mut scores: BTreeMap<String, f64> = BTreeMap::new();
        if q.is_empty() {
            return scores;
        }
        let mut seeds = Vec::new();
        for (key, n) in &self.kg.nodes {
            let name = content_token_set(&n.canonical_name);
            let kw: BTreeSet<String> = n.keywords.iter().flat_map(|k| content_token_set(k)).collect();
            let mut weight = 0.0;
            for t in &q {
                if name.contains(t) {
                    weight += 1.0;
                } else if kw.contains(t) {
                    weight += KEYWORD_SEED_WEIGHT;
                }
            }
            if weight > 0.0 {
                seeds.push((key.clone(), weight / q.len() as f64));
            }
        }
        for (seed, overlap) in seeds {
            let mut frontier = vec![seed.clone()];
            let mut seen = BTreeSet::from([seed]);
            for hop in 0..=max_hops {
                let s = overlap / (1.0 + hop as f64);
                let mut next = Vec::new();
                for k in &frontier {
                    *scores.entry(k.clone()).or_insert(0.0) += s;
                    if hop < max_hops {
                        let nbrs = self
                            .graph
                            .neighbors(
                                &GraphRef::Node(k.clone()),
                                LinkKind::Semantic,
                                crate::hetero_index::Direction::Both,
                            )
                            .unwrap_or_default();
                        for n in nbrs {
                            if let GraphRef::Node(nk) = n {
                                if seen.insert(nk.clone()) {
                                    next.push(nk);
                                }
                            }
                        }
                    }
                }
                frontier = next;
            }
        }
        scores
    }

    fn graph_scores(&self, q: &RetrievalQuery) -> Vec<(GraphRef, f64)> {
        let nodes = self.graph_node_scores(&q.text, q.max_hops);
        let mut fine: BTreeMap<GraphRef, f64> = BTreeMap::new();
        for (k, s) in &nodes {
            fine.insert(GraphRef::Node(k.clone()), *s);
        }
        for (a, b) in self.kg.edges.keys() {
            if let (Some(sa), Some(sb)) = (nodes.get(a), nodes.get(b)) {
                fine.insert(GraphRef::Edge(a.clone(), b.clone()), sa.min(*sb));
            }
        }
        let q_tokens = content_token_set(&q.text);
        for f in self.facts.values() {
            let subject = nodes.get(&node_key(&f.subject)).copied().unwrap_or(0.0);
            let attr = content_token_set(&f.attribute).intersection(&q_tokens).count() as f64;
            let s = subject + attr / q_tokens.len().max(1) as f64;
            if s > 0.0 {
                fine.insert(f.graph_ref(), s);
            }
        }
        if q.tier == Tier::Fine {
            return fine.into_iter().collect();
        }
        let mut chunks: BTreeMap<GraphRef, f64> = BTreeMap::new();
        for (r, s) in &fine {
            for c in self.graph.deriving_chunks(r) {
                let e = chunks.entry(c).or_insert(0.0);
                *e = e.max(*s);
            }
        }
        if q.tier == Tier::Chunk {
            return chunks.into_iter().collect();
        }
        let mut objects: BTreeMap<GraphRef, f64> = BTreeMap::new();
        for (c, s) in &chunks {
            if let GraphRef::Chunk(p) = c {
                let e = objects
                    .entry(GraphRef::Object(p.parent().expect("L2 pid")))
                    .or_insert(0.0);
                *e = e.max(*s);
            }
        }
        objects.into_iter().collect()
    }

    pub fn graph_search(&self, q: &RetrievalQuery) -> Result<Vec<RetrievedItem>, RetrievalError> {
        q.validate()?;
        Ok(self.finish(self.graph_scores(q), q, q.top_k))
    }

    /// The query text followed by the names of the top graph nodes not
    /// already covered by it.
    pub fn expand_query(&self, text: &str, max_hops: usize) -> String {
        let q = content_token_set(text);
        let mut nodes: Vec<(String, f64)> = self.graph_node_scores(text, max_hops).into_iter().collect();
        nodes.sort_by(|(ka, a), (kb, b)| b.total_cmp(a).then_with(|| ka.cmp(kb)));
        let mut out = text.to_string();
        for (key, _) in nodes.into_iter().take(EXPANSION_NODES) {
            let Some(n) = self.kg.nodes.get(&key) else {
                continue;
            };
            if !content_token_set(&n.canonical_name).is_subset(&q) {
                out.push(' ');
                out.push_str(&n.canonical_name);
            }
        }
        out
    }

    pub fn hybrid_search(&self, q: &RetrievalQuery) -> Result<Vec<RetrievedItem>, RetrievalError> {
        q.validate()?;
        let depth = FUSION_DEPTH.max(5 * q.top_k);
        let list = |scored: Vec<(GraphRef, f64)>| -> Vec<GraphRef> {
            self.finish(scored, q, depth).into_iter().map(|i| i.item_ref).collect()
        };
        let expanded = RetrievalQuery {
            text: self.expand_query(&q.text, q.max_hops),
            ..q.clone()
        };
        let kw = list(self.keyword_scores(&expanded));
        let vec = self.vector_scores(&expanded).map(list);
        let graph = list(self.graph_scores(q));
        let vec = match vec {
            Ok(v) => v,
            Err(e) if kw.is_empty() && graph.is_empty() => return Err(e),
            Err(e) => {
                tracing::debug!(error = %e, "vector strategy unavailable in fusion");
                vec![]
            }
        };
        let fused = rrf_fuse(&[kw, vec, graph], RRF_K);
        Ok(fused.into_iter().take(q.top_k).map(|(r, s)| self.item(&r, s)).collect())
    }
}
