//! Registry of digital objects.
//!
//! Objects are addressed by [`Pid`]. A [`Registry`] keeps objects in memory,
//! optionally backed by a data directory holding `objects.jsonl` (one record
//! per line, last record for a pid wins) and a content-addressed
//! `payloads/{sha256}` directory. Writes go through a single writer lock.
//! A [`GlobalRegistry`] federates several per-domain registries without
//! copying anything.

mod pid;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pid::{is_valid_domain, mint_pid, Level, Pid, PID_SCHEME};

use crate::digest::sha256_hex;

pub const OBJECTS_FILE: &str = "objects.jsonl";
pub const PAYLOAD_DIR: &str = "payloads";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid domain token `{0}` (expected [a-z0-9_-]+)")]
    InvalidDomain(String),
    #[error("invalid pid `{0}`")]
    InvalidPid(String),
    #[error("ordinal given without parent")]
    OrdinalWithoutParent,
    #[error("parent given without ordinal")]
    ParentWithoutOrdinal,
    #[error("pid {0} already registered with different content")]
    Conflict(Pid),
    #[error("pid {0} not found")]
    NotFound(Pid),
    #[error("parent {parent} of {child} is not registered")]
    MissingParent { child: Pid, parent: Pid },
    #[error("object {0} violates invariant: {1}")]
    Invariant(Pid, String),
    #[error("object {0} already carries different enriched metadata")]
    AlreadyEnriched(Pid),
    #[error("payload {0} missing from payload store")]
    MissingPayload(String),
    #[error("duplicate domain `{0}` in federation")]
    DuplicateDomain(String),
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Document,
    Image,
    Audio,
    Table,
    Chunk,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Document => "document",
            ObjectKind::Image => "image",
            ObjectKind::Audio => "audio",
            ObjectKind::Table => "table",
            ObjectKind::Chunk => "chunk",
        }
    }
}

/// Content-addressed locator: full SHA-256 hex digest plus byte length.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PayloadRef {
    pub sha256: String,
    pub len: u64,
}

impl PayloadRef {
    pub fn of(bytes: &[u8]) -> Self {
        PayloadRef {
            sha256: sha256_hex(bytes),
            len: bytes.len() as u64,
        }
    }
}

/// Half-open character range `[start, end)` of a chunk within its parent's text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitMetadata {
    pub title: String,
    pub source: String,
    pub timestamp: DateTime<Utc>,
    pub media_type: String,
    pub domain: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentProvenance {
    pub model: String,
    pub prompt_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedMetadata {
    pub summary: String,
    pub hypothetical_questions: Vec<String>,
    pub classification_labels: BTreeSet<String>,
    pub keywords: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multimodal_description: Option<String>,
    /// Rendered atomic facts distilled from the object's chunks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement_highlights: Vec<String>,
    pub enrichment_provenance: EnrichmentProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_uri: String,
    pub parser_id: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitalObject {
    pub pid: Pid,
    pub kind: ObjectKind,
    pub payload_ref: PayloadRef,
    /// Extracted text of an L1 object when it differs from the raw payload
    /// (tables, externally parsed formats). Chunks slice this text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_ref: Option<PayloadRef>,
    /// For chunks: the character span within the parent's text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<CharSpan>,
    /// For chunks: SHA-256 of the chunk text (the pid suffix is its prefix).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_sha256: Option<String>,
    pub explicit_meta: ExplicitMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enriched_meta: Option<EnrichedMetadata>,
    #[serde(default)]
    pub children: Vec<Pid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Pid>,
    pub created_at: DateTime<Utc>,
    pub provenance: Provenance,
}

impl DigitalObject {
    /// Structural invariants that do not need the registry.
    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |msg: &str| Err(StoreError::Invariant(self.pid.clone(), msg.to_string()));
        let is_chunk = self.kind == ObjectKind::Chunk;
        let is_l2 = self.pid.level() == Level::L2;
        if is_chunk != is_l2 || is_l2 != self.parent.is_some() {
            return bad("kind=chunk, L2 pid and parent must coincide");
        }
        if let Some(parent) = &self.parent {
            if self.pid.parent().as_ref() != Some(parent) {
                return bad("parent field disagrees with pid");
            }
        }
        if self.explicit_meta.domain != self.pid.domain() {
            return bad("explicit_meta.domain differs from pid domain");
        }
        let ords: Vec<_> = self.children.iter().map(|c| c.ordinal()).collect();
        if ords.iter().any(Option::is_none) || ords.windows(2).any(|w| w[0] >= w[1]) {
            return bad("children ordinals must be strictly increasing L2 pids");
        }
        if let Some(em) = &self.enriched_meta {
            let media = matches!(self.kind, ObjectKind::Image | ObjectKind::Audio);
            if media != em.multimodal_description.is_some() {
                return bad("multimodal_description present iff kind is image or audio");
            }
        }
        Ok(())
    }

    /// The fields fixed at registration time; children and enrichment are
    /// excluded because they are attached afterwards.
    fn identity_eq(&self, other: &DigitalObject) -> bool {
        self.pid == other.pid
            && self.pid.suffix() == other.pid.suffix()
            && self.kind == other.kind
            && self.payload_ref == other.payload_ref
            && self.text_ref == other.text_ref
            && self.span == other.span
            && self.content_sha256 == other.content_sha256
            && self.explicit_meta == other.explicit_meta
            && self.parent == other.parent
            && self.created_at == other.created_at
            && self.provenance == other.provenance
    }

    /// Locator of the object's text: `text_ref` if present, else the payload.
    pub fn text_locator(&self) -> &PayloadRef {
        self.text_ref.as_ref().unwrap_or(&self.payload_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub pid: Pid,
    pub stored_at: DateTime<Utc>,
}

/// Read access shared by a single registry and a federation.
pub trait ObjectLookup: Send + Sync {
    fn get(&self, pid: &Pid) -> Result<DigitalObject, StoreError>;
    fn list_domain(&self, domain: &str) -> Vec<Pid>;
    fn domains(&self) -> Vec<String>;
    fn read_payload(&self, payload: &PayloadRef) -> Result<Vec<u8>, StoreError>;

    /// Every L1 pid, domain by domain.
    fn all_l1(&self) -> Vec<Pid> {
        self.domains().iter().flat_map(|d| self.list_domain(d)).collect()
    }

    /// Text of an object: for chunks, the span of the parent text.
    fn object_text(&self, obj: &DigitalObject) -> Result<String, StoreError> {
        let bytes = self.read_payload(obj.text_locator())?;
        let text = String::from_utf8_lossy(&bytes);
        Ok(match obj.span {
            Some(span) => text.chars().skip(span.start).take(span.end - span.start).collect(),
            None => text.into_owned(),
        })
    }
}

#[derive(Default)]
struct Inner {
    objects: BTreeMap<Pid, DigitalObject>,
    payloads: BTreeMap<String, Arc<Vec<u8>>>,
}

/// A registry of digital objects. Many readers, one writer at a time.
pub struct Registry {
    root: Option<PathBuf>,
    inner: RwLock<Inner>,
    writer: Mutex<Option<File>>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Registry {
            root: None,
            inner: RwLock::new(Inner::default()),
            writer: Mutex::new(None),
        }
    }

    /// Open (or create) a registry persisted under `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(PAYLOAD_DIR))?;
        let path = root.join(OBJECTS_FILE);
        let mut inner = Inner::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let obj: DigitalObject = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                let obj = restore_suffix(obj);
                inner.objects.insert(obj.pid.clone(), obj);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Registry {
            root: Some(root),
            inner: RwLock::new(inner),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Store payload bytes content-addressed; idempotent.
    pub fn put_payload(&self, bytes: &[u8]) -> Result<PayloadRef, StoreError> {
        let r = PayloadRef::of(bytes);
        let _w = self.writer.lock().unwrap();
        if let Some(root) = &self.root {
            let path = root.join(PAYLOAD_DIR).join(&r.sha256);
            if !path.exists() {
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, bytes)?;
                fs::rename(&tmp, &path)?;
            }
        } else {
            self.inner
                .write()
                .unwrap()
                .payloads
                .entry(r.sha256.clone())
                .or_insert_with(|| Arc::new(bytes.to_vec()));
        }
        Ok(r)
    }

    /// Register an object. Re-registering identical content is a no-op.
    pub fn register(&self, object: DigitalObject) -> Result<Receipt, StoreError> {
        object.validate()?;
        let mut w = self.writer.lock().unwrap();
        {
            let inner = self.inner.read().unwrap();
            if let Some(existing) = inner.objects.get(&object.pid) {
                return if existing.identity_eq(&object) {
                    Ok(Receipt {
                        pid: object.pid.clone(),
                        stored_at: Utc::now(),
                    })
                } else {
                    Err(StoreError::Conflict(object.pid.clone()))
                };
            }
            if let Some(parent) = &object.parent {
                if !inner.objects.contains_key(parent) {
                    return Err(StoreError::MissingParent {
                        child: object.pid.clone(),
                        parent: parent.clone(),
                    });
                }
            }
            for child in &object.children {
                if !inner.objects.contains_key(child) {
                    return Err(StoreError::Invariant(
                        object.pid.clone(),
                        format!("child {child} is not registered"),
                    ));
                }
            }
        }
        if self.root.is_some() {
            let payload = self.read_payload_unlocked(&object.payload_ref);
            if payload.is_err() {
                return Err(StoreError::MissingPayload(object.payload_ref.sha256.clone()));
            }
        } else if !self
            .inner
            .read()
            .unwrap()
            .payloads
            .contains_key(&object.payload_ref.sha256)
        {
            return Err(StoreError::MissingPayload(object.payload_ref.sha256.clone()));
        }
        append_record(&mut w, &object)?;
        let pid = object.pid.clone();
        self.inner.write().unwrap().objects.insert(pid.clone(), object);
        Ok(Receipt {
            pid,
            stored_at: Utc::now(),
        })
    }

    /// Insert `child` into the parent's ordered children list.
    /// Returns false when the child was already present.
    pub fn attach_child(&self, parent: &Pid, child: &Pid) -> Result<bool, StoreError> {
        let mut w = self.writer.lock().unwrap();
        let updated = {
            let inner = self.inner.read().unwrap();
            let p = inner
                .objects
                .get(parent)
                .ok_or_else(|| StoreError::NotFound(parent.clone()))?;
            if !inner.objects.contains_key(child) {
                return Err(StoreError::NotFound(child.clone()));
            }
            if child.parent().as_ref() != Some(parent) {
                return Err(StoreError::Invariant(child.clone(), format!("not a child of {parent}")));
            }
            if p.children.contains(child) {
                return Ok(false);
            }
            let mut p = p.clone();
            let pos = p.children.partition_point(|c| c.ordinal() < child.ordinal());
            p.children.insert(pos, child.clone());
            p
        };
        append_record(&mut w, &updated)?;
        self.inner.write().unwrap().objects.insert(parent.clone(), updated);
        Ok(true)
    }

    /// Compare-and-set `enriched_meta` from absent to present.
    /// Attaching an equal value again succeeds without writing.
    pub fn attach_enrichment(&self, pid: &Pid, meta: EnrichedMetadata) -> Result<(), StoreError> {
        let mut w = self.writer.lock().unwrap();
        let updated = {
            let inner = self.inner.read().unwrap();
            let obj = inner
                .objects
                .get(pid)
                .ok_or_else(|| StoreError::NotFound(pid.clone()))?;
            match &obj.enriched_meta {
                Some(existing) if *existing == meta => return Ok(()),
                Some(_) => return Err(StoreError::AlreadyEnriched(pid.clone())),
                None => {}
            }
            let mut obj = obj.clone();
            obj.enriched_meta = Some(meta);
            obj.validate()?;
            obj
        };
        append_record(&mut w, &updated)?;
        self.inner.write().unwrap().objects.insert(pid.clone(), updated);
        Ok(())
    }

    /// Rewrite `objects.jsonl` with one line per object, in pid order.
    pub fn compact(&self) -> Result<(), StoreError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let mut w = self.writer.lock().unwrap();
        let inner = self.inner.read().unwrap();
        let path = root.join(OBJECTS_FILE);
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = File::create(&tmp)?;
            for obj in inner.objects.values() {
                serde_json::to_writer(&mut f, obj).map_err(std::io::Error::from)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        *w = Some(OpenOptions::new().append(true).open(&path)?);
        Ok(())
    }

    /// Snapshot of every object in pid order.
    pub fn objects(&self) -> Vec<DigitalObject> {
        self.inner.read().unwrap().objects.values().cloned().collect()
    }

    pub fn contains(&self, pid: &Pid) -> bool {
        self.inner.read().unwrap().objects.contains_key(pid)
    }

    fn read_payload_unlocked(&self, payload: &PayloadRef) -> Result<Vec<u8>, StoreError> {
        match &self.root {
            Some(root) => fs::read(root.join(PAYLOAD_DIR).join(&payload.sha256))
                .map_err(|_| StoreError::MissingPayload(payload.sha256.clone())),
            None => self
                .inner
                .read()
                .unwrap()
                .payloads
                .get(&payload.sha256)
                .map(|b| b.as_ref().clone())
                .ok_or_else(|| StoreError::MissingPayload(payload.sha256.clone())),
        }
    }
}

fn restore_suffix(mut obj: DigitalObject) -> DigitalObject {
    if let Some(full) = &obj.content_sha256 {
        let suffix = full.get(..16).unwrap_or_default().to_string();
        obj.pid = obj.pid.with_content_suffix(&suffix);
    }
    obj
}

fn append_record(w: &mut Option<File>, obj: &DigitalObject) -> Result<(), StoreError> {
    if let Some(f) = w.as_mut() {
        let mut line = serde_json::to_vec(obj).map_err(std::io::Error::from)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.flush()?;
    }
    Ok(())
}

impl ObjectLookup for Registry {
    fn get(&self, pid: &Pid) -> Result<DigitalObject, StoreError> {
        self.inner
            .read()
            .unwrap()
            .objects
            .get(pid)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(pid.clone()))
    }

    fn list_domain(&self, domain: &str) -> Vec<Pid> {
        let inner = self.inner.read().unwrap();
        let mut l1: Vec<&DigitalObject> = inner
            .objects
            .values()
            .filter(|o| o.pid.domain() == domain && o.pid.level() == Level::L1)
            .collect();
        l1.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.pid.suffix().cmp(b.pid.suffix()))
        });
        l1.into_iter().map(|o| o.pid.clone()).collect()
    }

    fn domains(&self) -> Vec<String> {
        let inner = self.inner.read().unwrap();
        let set: BTreeSet<String> = inner.objects.keys().map(|p| p.domain().to_string()).collect();
        set.into_iter().collect()
    }

    fn read_payload(&self, payload: &PayloadRef) -> Result<Vec<u8>, StoreError> {
        self.read_payload_unlocked(payload)
    }
}

/// Read-only federation of per-domain registries.
pub struct GlobalRegistry {
    members: BTreeMap<String, Arc<dyn ObjectLookup>>,
}

impl GlobalRegistry {
    /// Federate `(domain, registry)` pairs. Domain names must be distinct.
    pub fn federate(members: impl IntoIterator<Item = (String, Arc<dyn ObjectLookup>)>) -> Result<Self, StoreError> {
        let mut map = BTreeMap::new();
        for (domain, reg) in members {
            if !is_valid_domain(&domain) {
                return Err(StoreError::InvalidDomain(domain));
            }
            if map.insert(domain.clone(), reg).is_some() {
                return Err(StoreError::DuplicateDomain(domain));
            }
        }
        Ok(GlobalRegistry { members: map })
    }

    pub fn member(&self, domain: &str) -> Option<&Arc<dyn ObjectLookup>> {
        self.members.get(domain)
    }
}

impl ObjectLookup for GlobalRegistry {
    fn get(&self, pid: &Pid) -> Result<DigitalObject, StoreError> {
        self.members
            .get(pid.domain())
            .ok_or_else(|| StoreError::NotFound(pid.clone()))?
            .get(pid)
    }

    fn list_domain(&self, domain: &str) -> Vec<Pid> {
        self.members
            .get(domain)
            .map(|m| m.list_domain(domain))
            .unwrap_or_default()
    }

    fn domains(&self) -> Vec<String> {
        self.members.keys().cloned().collect()
    }

    fn read_payload(&self, payload: &PayloadRef) -> Result<Vec<u8>, StoreError> {
        for m in self.members.values() {
            if let Ok(b) = m.read_payload(payload) {
                return Ok(b);
            }
        }
        Err(StoreError::MissingPayload(payload.sha256.clone()))
    }
}
