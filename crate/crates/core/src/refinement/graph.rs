use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::hetero_index::{node_key, GraphRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgNode {
    pub canonical_name: String,
    pub entity_type: String,
    pub keywords: BTreeSet<String>,
    pub description: String,
    pub source_refs: BTreeSet<GraphRef>,
    pub mention_count: u32,
    /// Mentions per source chunk; merged by maximum so re-merging the same
    /// extraction never double counts.
    pub mentions: BTreeMap<GraphRef, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgEdge {
    /// Endpoint canonical names, ordered by node key.
    pub endpoints: (String, String),
    pub keywords: BTreeSet<String>,
    pub description: String,
    pub source_refs: BTreeSet<GraphRef>,
    pub weight: f64,
    pub mentions: BTreeMap<GraphRef, u32>,
}

impl KgNode {
    pub fn new(
        name: &str,
        entity_type: &str,
        keywords: BTreeSet<String>,
        description: String,
        source: GraphRef,
    ) -> Self {
        let mut n = KgNode {
            canonical_name: name.trim().to_string(),
            entity_type: entity_type.trim().to_string(),
            keywords,
            description,
            source_refs: BTreeSet::new(),
            mention_count: 0,
            mentions: BTreeMap::from([(source, 1)]),
        };
        n.recount();
        n
    }

    pub fn key(&self) -> String {
        node_key(&self.canonical_name)
    }

    pub fn graph_ref(&self) -> GraphRef {
        GraphRef::Node(self.key())
    }

    fn recount(&mut self) {
        self.source_refs = self.mentions.keys().cloned().collect();
        self.mention_count = self.mentions.values().sum();
    }

    fn absorb(&mut self, other: &KgNode) {
        self.canonical_name = smaller(&self.canonical_name, &other.canonical_name);
        self.entity_type = smaller(&self.entity_type, &other.entity_type);
        self.keywords.extend(other.keywords.iter().cloned());
        self.description = more_informative(&self.description, &other.description);
        merge_mentions(&mut self.mentions, &other.mentions);
        self.recount();
    }
}

impl KgEdge {
    pub fn new(a: &str, b: &str, keywords: BTreeSet<String>, description: String, source: GraphRef) -> Self {
        let (a, b) = (a.trim().to_string(), b.trim().to_string());
        let endpoints = if node_key(&a) <= node_key(&b) { (a, b) } else { (b, a) };
        let mut e = KgEdge {
            endpoints,
            keywords,
            description,
            source_refs: BTreeSet::new(),
            weight: 0.0,
            mentions: BTreeMap::from([(source, 1)]),
        };
        e.recount();
        e
    }

    pub fn key(&self) -> (String, String) {
        (node_key(&self.endpoints.0), node_key(&self.endpoints.1))
    }

    pub fn graph_ref(&self) -> GraphRef {
        GraphRef::edge(&self.endpoints.0, &self.endpoints.1)
    }

    fn recount(&mut self) {
        self.source_refs = self.mentions.keys().cloned().collect();
        self.weight = f64::from(self.mentions.values().sum::<u32>());
    }

    fn absorb(&mut self, other: &KgEdge) {
        self.endpoints.0 = smaller(&self.endpoints.0, &other.endpoints.0);
        self.endpoints.1 = smaller(&self.endpoints.1, &other.endpoints.1);
        self.keywords.extend(other.keywords.iter().cloned());
        self.description = more_informative(&self.description, &other.description);
        merge_mentions(&mut self.mentions, &other.mentions);
        self.recount();
    }
}

fn smaller(a: &str, b: &str) -> String {
    if b < a { b } else { a }.to_string()
}

/// Longer text wins; equal lengths fall back to lexicographic order.
fn more_informative(a: &str, b: &str) -> String {
    let (la, lb) = (a.chars().count(), b.chars().count());
    if lb > la || (lb == la && b < a) { b } else { a }.to_string()
}

fn merge_mentions(into: &mut BTreeMap<GraphRef, u32>, from: &BTreeMap<GraphRef, u32>) {
    for (k, v) in from {
        let e = into.entry(k.clone()).or_insert(0);
        *e = (*e).max(*v);
    }
}

/// A knowledge graph with nodes keyed case-insensitively and one edge per
/// unordered endpoint pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "GraphRecord", into = "GraphRecord")]
pub struct KnowledgeGraph {
    pub nodes: BTreeMap<String, KgNode>,
    pub edges: BTreeMap<(String, String), KgEdge>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
}

impl From<GraphRecord> for KnowledgeGraph {
    fn from(r: GraphRecord) -> Self {
        let mut g = KnowledgeGraph::default();
        for n in r.nodes {
            g.add_node(n);
        }
        for e in r.edges {
            g.add_edge(e);
        }
        g
    }
}

impl From<KnowledgeGraph> for GraphRecord {
    fn from(g: KnowledgeGraph) -> Self {
        GraphRecord {
            nodes: g.nodes.into_values().collect(),
            edges: g.edges.into_values().collect(),
        }
    }
}

impl KnowledgeGraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn add_node(&mut self, node: KgNode) {
        match self.nodes.get_mut(&node.key()) {
            Some(n) => n.absorb(&node),
            None => {
                self.nodes.insert(node.key(), node);
            }
        }
    }

    pub fn add_edge(&mut self, edge: KgEdge) {
        match self.edges.get_mut(&edge.key()) {
            Some(e) => e.absorb(&edge),
            None => {
                self.edges.insert(edge.key(), edge);
            }
        }
    }

    /// Union of two graphs. Idempotent, commutative and associative.
    pub fn merge(&self, other: &KnowledgeGraph) -> KnowledgeGraph {
        let mut g = self.clone();
        for n in other.nodes.values() {
            g.add_node(n.clone());
        }
        for e in other.edges.values() {
            g.add_edge(e.clone());
        }
        g.sync_endpoint_names();
        g
    }

    fn sync_endpoint_names(&mut self) {
        for ((ka, kb), e) in self.edges.iter_mut() {
            if let Some(n) = self.nodes.get(ka) {
                e.endpoints.0 = n.canonical_name.clone();
            }
            if let Some(n) = self.nodes.get(kb) {
                e.endpoints.1 = n.canonical_name.clone();
            }
        }
    }

    pub fn node(&self, name: &str) -> Option<&KgNode> {
        self.nodes.get(&node_key(name))
    }

    /// Violations of the node and edge invariants, empty when consistent.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, n) in &self.nodes {
            if n.canonical_name.trim().is_empty() {
                out.push(format!("node {k:?} has an empty name"));
            }
            if n.source_refs.is_empty() || n.mention_count == 0 {
                out.push(format!("node {k:?} has no source"));
            }
        }
        for ((a, b), e) in &self.edges {
            if !self.nodes.contains_key(a) || !self.nodes.contains_key(b) {
                out.push(format!("edge {a:?}-{b:?} has a missing endpoint"));
            }
            if e.keywords.is_empty() {
                out.push(format!("edge {a:?}-{b:?} has no keywords"));
            }
            if e.source_refs.is_empty() {
                out.push(format!("edge {a:?}-{b:?} has no source"));
            }
        }
        out
    }
}

/// Fold per-chunk graphs into one graph.
pub fn merge_graph<'a>(graphs: impl IntoIterator<Item = &'a KnowledgeGraph>) -> KnowledgeGraph {
    graphs
        .into_iter()
        .fold(KnowledgeGraph::default(), |acc, g| acc.merge(g))
}
