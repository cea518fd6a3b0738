//! One typed graph over objects, chunks, KG elements, facts and embeddings,
//! with provenance resolution back to L1 objects.

mod graph_ref;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph_ref::{node_key, GraphRef, ParseGraphRefError};

use crate::object_store::{DigitalObject, Level, Pid};
use crate::refinement::{AtomicFact, EmbeddingRecord, KnowledgeGraph};

pub const GRAPH_DUMP_FILE: &str = "hetero_graph.jsonl";

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("dangling {kind} link from {from} to {to}")]
    Dangling { kind: LinkKind, from: String, to: String },
    #[error("{0} has no deriving chunk")]
    Underived(GraphRef),
    #[error("{0} is not in the index")]
    Unresolvable(GraphRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Containment,
    Derivation,
    Semantic,
}

impl std::fmt::Display for LinkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkKind::Containment => "containment",
            LinkKind::Derivation => "derivation",
            LinkKind::Semantic => "semantic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Out,
    In,
    Both,
}

type Adjacency = BTreeMap<GraphRef, BTreeSet<GraphRef>>;

#[derive(Debug, Clone, Default, PartialEq)]
struct Links {
    out: Adjacency,
    inn: Adjacency,
}

impl Links {
    fn add(&mut self, from: GraphRef, to: GraphRef) {
        self.out.entry(from.clone()).or_default().insert(to.clone());
        self.inn.entry(to).or_default().insert(from);
    }

    fn count(&self) -> usize {
        self.out.values().map(BTreeSet::len).sum()
    }
}

/// The heterogeneous graph index. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeteroGraph {
    members: BTreeSet<GraphRef>,
    containment: Links,
    derivation: Links,
    semantic: Links,
    embedded: BTreeSet<GraphRef>,
}

#[derive(Serialize)]
struct LinkRecord<'a> {
    link: &'a str,
    from: &'a GraphRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<&'a GraphRef>,
}

/// Materialize every link. Fails on the first reference that does not
/// resolve to an input record.
pub fn build_index(
    objects: &[DigitalObject],
    kg: &KnowledgeGraph,
    facts: &[AtomicFact],
    embeddings: &[EmbeddingRecord],
) -> Result<HeteroGraph, IndexError> {
    let mut g = HeteroGraph::default();
    let by_pid: BTreeMap<&Pid, &DigitalObject> = objects.iter().map(|o| (&o.pid, o)).collect();
    for o in objects {
        g.members.insert(object_ref(&o.pid));
    }
    for o in objects {
        match o.pid.level() {
            Level::L1 => {
                for c in &o.children {
                    if !by_pid.contains_key(c) {
                        return Err(dangling(
                            LinkKind::Containment,
                            &object_ref(&o.pid),
                            &GraphRef::Chunk(c.clone()),
                        ));
                    }
                    g.containment.add(object_ref(&o.pid), GraphRef::Chunk(c.clone()));
                }
            }
            Level::L2 => {
                let parent = o.parent.clone().unwrap_or_else(|| o.pid.parent().expect("L2 pid"));
                match by_pid.get(&parent) {
                    Some(p) if p.children.contains(&o.pid) => {}
                    _ => {
                        return Err(dangling(
                            LinkKind::Containment,
                            &GraphRef::Object(parent),
                            &GraphRef::Chunk(o.pid.clone()),
                        ))
                    }
                }
            }
        }
    }
    let derive = |g: &mut HeteroGraph, target: GraphRef, sources: &BTreeSet<GraphRef>| {
        if sources.is_empty() {
            return Err(IndexError::Underived(target));
        }
        for s in sources {
            if !g.members.contains(s) || !matches!(s, GraphRef::Chunk(_)) {
                return Err(dangling(LinkKind::Derivation, s, &target));
            }
            g.derivation.add(s.clone(), target.clone());
        }
        g.members.insert(target);
        Ok(())
    };
    for n in kg.nodes.values() {
        derive(&mut g, n.graph_ref(), &n.source_refs)?;
    }
    for ((a, b), e) in &kg.edges {
        let eref = GraphRef::Edge(a.clone(), b.clone());
        for k in [a, b] {
            if !kg.nodes.contains_key(k) {
                return Err(dangling(LinkKind::Semantic, &eref, &GraphRef::Node(k.clone())));
            }
        }
        derive(&mut g, eref, &e.source_refs)?;
        if a != b {
            g.semantic.add(GraphRef::Node(a.clone()), GraphRef::Node(b.clone()));
            g.semantic.add(GraphRef::Node(b.clone()), GraphRef::Node(a.clone()));
        }
    }
    for f in facts {
        derive(&mut g, f.graph_ref(), &BTreeSet::from([f.source_ref.clone()]))?;
    }
    for e in embeddings {
        if !g.members.contains(&e.owner) {
            return Err(IndexError::Unresolvable(e.owner.clone()));
        }
        g.embedded.insert(e.owner.clone());
    }
    Ok(g)
}

/// L1 objects are `Object` refs, chunks are `Chunk` refs.
pub fn object_ref(pid: &Pid) -> GraphRef {
    match pid.level() {
        Level::L1 => GraphRef::Object(pid.clone()),
        Level::L2 => GraphRef::Chunk(pid.clone()),
    }
}

fn dangling(kind: LinkKind, from: &GraphRef, to: &GraphRef) -> IndexError {
    IndexError::Dangling {
        kind,
        from: from.to_string(),
        to: to.to_string(),
    }
}

impl HeteroGraph {
    pub fn contains(&self, r: &GraphRef) -> bool {
        self.members.contains(r)
    }

    pub fn members(&self) -> impl Iterator<Item = &GraphRef> {
        self.members.iter()
    }

    pub fn has_embedding(&self, r: &GraphRef) -> bool {
        self.embedded.contains(r)
    }

    pub fn link_count(&self, kind: LinkKind) -> usize {
        match kind {
            LinkKind::Containment => self.containment.count(),
            LinkKind::Derivation => self.derivation.count(),
            // Stored once per direction.
            LinkKind::Semantic => self.semantic.count() / 2,
        }
    }

    fn links(&self, kind: LinkKind) -> &Links {
        match kind {
            LinkKind::Containment => &self.containment,
            LinkKind::Derivation => &self.derivation,
            LinkKind::Semantic => &self.semantic,
        }
    }

    /// Adjacent refs in `GraphRef` order.
    pub fn neighbors(&self, r: &GraphRef, kind: LinkKind, direction: Direction) -> Result<Vec<GraphRef>, IndexError> {
        if !self.contains(r) {
            return Err(IndexError::Unresolvable(r.clone()));
        }
        let links = self.links(kind);
        let mut out = BTreeSet::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            out.extend(links.out.get(r).into_iter().flatten().cloned());
        }
        if matches!(direction, Direction::In | Direction::Both) {
            out.extend(links.inn.get(r).into_iter().flatten().cloned());
        }
        Ok(out.into_iter().collect())
    }

    /// Chunks a node, edge or fact was derived from, in ref order.
    pub fn deriving_chunks(&self, r: &GraphRef) -> Vec<GraphRef> {
        self.derivation
            .inn
            .get(r)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Provenance chain from `r` down to its first L1 object.
    pub fn provenance_chain(&self, r: &GraphRef) -> Result<Vec<GraphRef>, IndexError> {
        if !self.contains(r) {
            return Err(IndexError::Unresolvable(r.clone()));
        }
        let mut chain = vec![r.clone()];
        let mut cur = r.clone();
        loop {
            let next = match &cur {
                GraphRef::Object(_) => break,
                GraphRef::Chunk(p) => p.parent().map(GraphRef::Object),
                _ => self.deriving_chunks(&cur).into_iter().next(),
            };
            match next {
                Some(n) => {
                    chain.push(n.clone());
                    cur = n;
                }
                None => return Err(IndexError::Unresolvable(cur)),
            }
        }
        Ok(chain)
    }

    /// L1 pids behind each ref, deduplicated in first-appearance order.
    pub fn resolve_to_objects(&self, refs: &[GraphRef]) -> Result<Vec<Pid>, IndexError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let mut push = |p: Pid, out: &mut Vec<Pid>| {
            if seen.insert(p.clone()) {
                out.push(p);
            }
        };
        for r in refs {
            if !self.contains(r) {
                return Err(IndexError::Unresolvable(r.clone()));
            }
            match r {
                GraphRef::Object(p) => push(p.clone(), &mut out),
                GraphRef::Chunk(p) => push(p.parent().expect("chunk pid is L2"), &mut out),
                _ => {
                    for c in self.deriving_chunks(r) {
                        if let GraphRef::Chunk(p) = c {
                            push(p.parent().expect("chunk pid is L2"), &mut out);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Canonical text dump: one JSON record per link, then per embedding.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for kind in [LinkKind::Containment, LinkKind::Derivation, LinkKind::Semantic] {
            let name = kind.to_string();
            for (from, tos) in &self.links(kind).out {
                for to in tos {
                    let rec = LinkRecord {
                        link: &name,
                        from,
                        to: Some(to),
                    };
                    out.push_str(&serde_json::to_string(&rec).expect("serializable"));
                    out.push('\n');
                }
            }
        }
        for r in &self.embedded {
            let rec = LinkRecord {
                link: "embedding",
                from: r,
                to: None,
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn write_dump(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.dump())
    }
}
