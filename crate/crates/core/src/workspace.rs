//! A data directory holding one registry plus its refinement and index
//! artifacts, and the ingest and index pipelines that fill it.
//!
//! Layout:
//!
//! ```text
//! objects.jsonl  payloads/        object store
//! chunk_graphs.jsonl              per-chunk KG fragments and facts
//! kg_nodes.jsonl kg_edges.jsonl   merged knowledge graph
//! facts.jsonl embeddings.bin      atomic facts, vectors
//! index.json hetero_graph.jsonl   index manifest, link dump
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256;
use crate::hetero_index::{GraphRef, GRAPH_DUMP_FILE};
use crate::ingestion::{
    chunk, encapsulate_l2, enrich_media, enrich_metadata, media_type_for_path, parse_entity, BinaryKind, IngestConfig,
    IngestError,
};
use crate::llm_gateway::{Gateway, GatewayConfig};
use crate::object_store::{
    mint_pid, DigitalObject, ExplicitMetadata, Level, ObjectKind, ObjectLookup, Pid, Provenance, Registry, StoreError,
};
use crate::refinement::store::{
    append_jsonl, read_embeddings, read_jsonl, write_embeddings, write_jsonl, CHUNK_GRAPHS_FILE, EDGES_FILE,
    EMBEDDINGS_FILE, FACTS_FILE, NODES_FILE,
};
use crate::refinement::{
    embed_content, merge_graph, refine_chunk, AtomicFact, ChunkRefinement, KgEdge, KgNode, KnowledgeGraph, RefineError,
};
use crate::retrieval::{IndexData, RetrievalError, Retriever};

pub const MANIFEST_FILE: &str = "index.json";
pub const SIDECAR_SUFFIX: &str = ".meta.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("{path}: {source}")]
    Ingest { path: String, source: IngestError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error("no index in {0}; run the index command first")]
    NotIndexed(String),
    #[error("invalid domain name {0:?} (lowercase letters, digits, '_' and '-')")]
    InvalidDomain(String),
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Also embed KG nodes (name and description) for fine-tier vector search.
    pub embed_nodes: bool,
    /// Write the `hetero_graph.jsonl` link dump.
    pub dump_graph: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            embed_nodes: false,
            dump_graph: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceConfig {
    pub gateway: GatewayConfig,
    pub ingestion: IngestConfig,
    pub index: IndexConfig,
}

/// Optional `<file>.meta.json` next to an input file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sidecar {
    pub title: Option<String>,
    pub source: Option<String>,
    pub timestamp: Option<DateTime<Utc>>,
    pub media_type: Option<String>,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub objects: usize,
    pub chunks: usize,
    pub pids: Vec<Pid>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub embedder_id: String,
    pub dim: usize,
    pub objects: usize,
    pub chunks: usize,
    pub nodes: usize,
    pub edges: usize,
    pub facts: usize,
    pub embeddings: usize,
}

pub struct Workspace {
    root: PathBuf,
    registry: Arc<Registry>,
    gateway: Arc<Gateway>,
    config: WorkspaceConfig,
    refinements: Mutex<BTreeMap<Pid, ChunkRefinement>>,
}

fn first_heading(text: &str) -> Option<String> {
    text.lines()
        .map(str::trim)
        .find(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .filter(|t| !t.is_empty())
}

/// Slice `[start, end)` characters of `text`.
fn char_slice(chars: &[char], start: usize, end: usize) -> String {
    chars[start.min(chars.len())..end.min(chars.len())].iter().collect()
}

impl Workspace {
    pub fn open(
        root: impl AsRef<Path>,
        gateway: Arc<Gateway>,
        config: WorkspaceConfig,
    ) -> Result<Self, WorkspaceError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(io(&root))?;
        let registry = Arc::new(Registry::open(&root)?);
        let records: Vec<ChunkRefinement> = read_jsonl(&root.join(CHUNK_GRAPHS_FILE))?;
        let refinements = records.into_iter().map(|r| (r.chunk.clone(), r)).collect();
        Ok(Workspace {
            root,
            registry,
            gateway,
            config,
            refinements: Mutex::new(refinements),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.config
    }

    /// Ingest every file under `dir` (recursively, sidecars and hidden
    /// files skipped) into `domain`.
    pub fn ingest_dir(&self, dir: &Path, domain: &str) -> Result<IngestSummary, WorkspaceError> {
        if !crate::object_store::is_valid_domain(domain) {
            return Err(WorkspaceError::InvalidDomain(domain.to_string()));
        }
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        files.sort();
        let results: Vec<Result<(Pid, usize), WorkspaceError>> = files
            .par_iter()
            .map(|path| {
                let rel = path.strip_prefix(dir).unwrap_or(path);
                self.ingest_file(path, &rel.to_string_lossy().replace('\\', "/"), domain)
            })
            .collect();
        let mut summary = IngestSummary::default();
        for r in results {
            let (pid, chunks) = r?;
            summary.objects += 1;
            summary.chunks += chunks;
            summary.pids.push(pid);
        }
        self.registry.compact()?;
        self.persist_refinements()?;
        Ok(summary)
    }

    fn persist_refinements(&self) -> Result<(), WorkspaceError> {
        let map = self.refinements.lock().unwrap();
        let records: Vec<&ChunkRefinement> = map.values().collect();
        write_jsonl(&self.root.join(CHUNK_GRAPHS_FILE), &records)?;
        Ok(())
    }

    fn read_sidecar(path: &Path) -> Result<Sidecar, WorkspaceError> {
        let side = PathBuf::from(format!("{}{SIDECAR_SUFFIX}", path.display()));
        if !side.exists() {
            return Ok(Sidecar::default());
        }
        let raw = std::fs::read_to_string(&side).map_err(io(&side))?;
        serde_json::from_str(&raw).map_err(|e| WorkspaceError::Sidecar {
            path: side.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Ingest one file; returns its pid and chunk count. Re-ingesting
    /// identical bytes is a no-op.
    pub fn ingest_file(&self, path: &Path, rel: &str, domain: &str) -> Result<(Pid, usize), WorkspaceError> {
        let ingest_err = |source: IngestError| WorkspaceError::Ingest {
            path: path.display().to_string(),
            source,
        };
        let bytes = std::fs::read(path).map_err(io(path))?;
        let sidecar = Self::read_sidecar(path)?;
        let media_type = sidecar
            .media_type
            .clone()
            .unwrap_or_else(|| media_type_for_path(path).to_string());
        let parsed = parse_entity(
            &bytes,
            &media_type,
            self.config.ingestion.external_parser.as_deref(),
            Some(path),
        )
        .map_err(ingest_err)?;
        let payload_ref = self.registry.put_payload(&bytes)?;
        let text_ref = if parsed.binary_kind.is_none() && parsed.text.as_bytes() != bytes.as_slice() {
            Some(self.registry.put_payload(parsed.text.as_bytes())?)
        } else {
            None
        };
        let pid = mint_pid(domain, &sha256(&bytes), None, None)?;
        let kind = match parsed.binary_kind {
            Some(BinaryKind::Image) => ObjectKind::Image,
            Some(BinaryKind::Audio) => ObjectKind::Audio,
            None if !parsed.tables.is_empty() => ObjectKind::Table,
            None => ObjectKind::Document,
        };
        let timestamp = match sidecar.timestamp {
            Some(t) => t,
            None if self.config.ingestion.timestamp_from_mtime => std::fs::metadata(path)
                .and_then(|m| m.modified())
                .map(DateTime::<Utc>::from)
                .unwrap_or(DateTime::UNIX_EPOCH),
            None => DateTime::UNIX_EPOCH,
        };
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let title = sidecar
            .title
            .clone()
            .or_else(|| first_heading(&parsed.text))
            .unwrap_or(stem);
        let source = sidecar.source.clone().unwrap_or_else(|| rel.to_string());
        let object = DigitalObject {
            pid: pid.clone(),
            kind,
            payload_ref,
            text_ref,
            span: None,
            content_sha256: None,
            explicit_meta: ExplicitMetadata {
                title,
                source: source.clone(),
                timestamp,
                media_type: media_type.clone(),
                domain: domain.to_string(),
                labels: sidecar.labels.clone(),
            },
            enriched_meta: None,
            children: vec![],
            parent: None,
            created_at: timestamp,
            provenance: Provenance {
                source_uri: source,
                parser_id: parsed.parser_id.clone(),
                tool_version: TOOL_VERSION.to_string(),
            },
        };
        self.registry.register(object.clone())?;
        let parent = self.registry.get(&pid)?;
        let chunks = chunk(&pid, &parsed.text, &self.config.ingestion.chunk).map_err(ingest_err)?;
        let mut highlights = Vec::new();
        for c in &chunks {
            let l2 = encapsulate_l2(&self.registry, &parent, c).map_err(ingest_err)?;
            let cached = self.refinements.lock().unwrap().get(&l2.pid).cloned();
            let refinement = match cached {
                Some(r) => r,
                None => {
                    let r = refine_chunk(&l2.pid, &c.text, &self.gateway)?;
                    append_jsonl(&self.root.join(CHUNK_GRAPHS_FILE), &r)?;
                    self.refinements.lock().unwrap().insert(l2.pid.clone(), r.clone());
                    r
                }
            };
            for f in &refinement.facts {
                let s = f.rendered();
                if !highlights.contains(&s) {
                    highlights.push(s);
                }
            }
        }
        if parent.enriched_meta.is_none() {
            let meta = if matches!(kind, ObjectKind::Image | ObjectKind::Audio) {
                enrich_media(&parent, &self.gateway)
            } else {
                enrich_metadata(&parent, &parsed.text, highlights, &self.gateway)
            }
            .map_err(ingest_err)?;
            self.registry.attach_enrichment(&pid, meta)?;
        }
        Ok((pid, chunks.len()))
    }

    /// Text of every text-bearing L1 object and every chunk.
    pub fn texts(&self, objects: &[DigitalObject]) -> Result<BTreeMap<Pid, String>, WorkspaceError> {
        let mut texts = BTreeMap::new();
        let mut parent_chars: BTreeMap<Pid, Vec<char>> = BTreeMap::new();
        for o in objects.iter().filter(|o| o.pid.level() == Level::L1) {
            if matches!(o.kind, ObjectKind::Image | ObjectKind::Audio) {
                continue;
            }
            let t = self.registry.object_text(o)?;
            parent_chars.insert(o.pid.clone(), t.chars().collect());
            texts.insert(o.pid.clone(), t);
        }
        for o in objects.iter().filter(|o| o.pid.level() == Level::L2) {
            let (Some(span), Some(parent)) = (o.span, &o.parent) else {
                continue;
            };
            if let Some(chars) = parent_chars.get(parent) {
                texts.insert(o.pid.clone(), char_slice(chars, span.start, span.end));
            }
        }
        Ok(texts)
    }

    /// Merge refinements, embed, and write all index artifacts.
    pub fn build_index(&self) -> Result<IndexManifest, WorkspaceError> {
        let objects = self.registry.objects();
        let live: BTreeSet<&Pid> = objects.iter().map(|o| &o.pid).collect();
        let refinements: Vec<ChunkRefinement> = self
            .refinements
            .lock()
            .unwrap()
            .values()
            .filter(|r| live.contains(&r.chunk))
            .cloned()
            .collect();
        let kg = merge_graph(refinements.iter().map(|r| &r.graph));
        let mut seen = BTreeSet::new();
        let facts: Vec<AtomicFact> = refinements
            .iter()
            .flat_map(|r| r.facts.iter().cloned())
            .filter(|f| seen.insert(f.id.clone()))
            .collect();
        let texts = self.texts(&objects)?;
        let mut to_embed: Vec<(GraphRef, String)> = Vec::new();
        for o in &objects {
            match o.pid.level() {
                Level::L1 => {
                    let mut parts = vec![o.explicit_meta.title.clone()];
                    if let Some(em) = &o.enriched_meta {
                        parts.push(em.summary.clone());
                        parts.extend(em.keywords.iter().cloned());
                    }
                    to_embed.push((GraphRef::Object(o.pid.clone()), parts.join("\n")));
                }
                Level::L2 => {
                    if let Some(t) = texts.get(&o.pid).filter(|t| !t.trim().is_empty()) {
                        to_embed.push((GraphRef::Chunk(o.pid.clone()), t.clone()));
                    }
                }
            }
        }
        for f in &facts {
            to_embed.push((f.graph_ref(), f.rendered()));
        }
        if self.config.index.embed_nodes {
            for n in kg.nodes.values() {
                to_embed.push((n.graph_ref(), format!("{} {}", n.canonical_name, n.description)));
            }
        }
        to_embed.sort_by(|a, b| a.0.cmp(&b.0));
        let embeddings = embed_content(&to_embed, &self.gateway)?;
        let dim = self.gateway.embed_dim();
        let nodes: Vec<&KgNode> = kg.nodes.values().collect();
        let edges: Vec<&KgEdge> = kg.edges.values().collect();
        write_jsonl(&self.root.join(NODES_FILE), &nodes)?;
        write_jsonl(&self.root.join(EDGES_FILE), &edges)?;
        write_jsonl(&self.root.join(FACTS_FILE), &facts)?;
        write_embeddings(&self.root.join(EMBEDDINGS_FILE), dim, &embeddings)?;
        let manifest = IndexManifest {
            embedder_id: self.gateway.model_id().to_string(),
            dim,
            objects: objects.iter().filter(|o| o.pid.level() == Level::L1).count(),
            chunks: objects.iter().filter(|o| o.pid.level() == Level::L2).count(),
            nodes: kg.nodes.len(),
            edges: kg.edges.len(),
            facts: facts.len(),
            embeddings: embeddings.len(),
        };
        let retriever = Retriever::new(
            IndexData {
                objects,
                texts,
                kg,
                facts,
                embeddings,
            },
            self.gateway.clone(),
        )?;
        if self.config.index.dump_graph {
            let p = self.root.join(GRAPH_DUMP_FILE);
            retriever.graph().write_dump(&p).map_err(io(&p))?;
        }
        let p = self.root.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&p, body + "\n").map_err(io(&p))?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> Result<IndexManifest, WorkspaceError> {
        let p = self.root.join(MANIFEST_FILE);
        if !p.exists() {
            return Err(WorkspaceError::NotIndexed(self.root.display().to_string()));
        }
        let raw = std::fs::read_to_string(&p).map_err(io(&p))?;
        serde_json::from_str(&raw).map_err(|e| WorkspaceError::Sidecar {
            path: p.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Load the built index into a retriever.
    pub fn retriever(&self) -> Result<Retriever, WorkspaceError> {
        let manifest = self.manifest()?;
        let objects = self.registry.objects();
        let texts = self.texts(&objects)?;
        let mut kg = KnowledgeGraph::default();
        for n in read_jsonl::<KgNode>(&self.root.join(NODES_FILE))? {
            kg.add_node(n);
        }
        for e in read_jsonl::<KgEdge>(&self.root.join(EDGES_FILE))? {
            kg.add_edge(e);
        }
        let facts = read_jsonl(&self.root.join(FACTS_FILE))?;
        let (_, embeddings) = read_embeddings(&self.root.join(EMBEDDINGS_FILE), &manifest.embedder_id)?;
        Ok(Retriever::new(
            IndexData {
                objects,
                texts,
                kg,
                facts,
                embeddings,
            },
            self.gateway.clone(),
        )?)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), WorkspaceError> {
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let entry = entry.map_err(io(dir))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || name.ends_with(SIDECAR_SUFFIX) {
            continue;
        }
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}
