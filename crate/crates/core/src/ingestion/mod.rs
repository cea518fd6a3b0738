//! Raw entities to digital objects: parsing, chunking into L2 objects and
//! metadata enrichment.

mod chunk;
mod parse;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk, Chunk, ChunkPolicy, SNAP_WINDOW};
pub use parse::{media_type_for_path, parse_csv, parse_entity, textualize_tables, BinaryKind, ParsedEntity, Table};

use crate::digest::sha256;
use crate::llm_gateway::tasks::{
    ClassifyInput, DescribeMediaInput, DescriptionOutput, LabelsOutput, QuestionsOutput, TextInput,
};
use crate::llm_gateway::{Gateway, GatewayError, Task};
use crate::object_store::{
    mint_pid, CharSpan, DigitalObject, EnrichedMetadata, EnrichmentProvenance, ObjectKind, Registry, StoreError,
};

pub const KEYWORDS_PER_OBJECT: usize = 5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unsupported media type {0} and no external parser configured")]
    UnsupportedMediaType(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("external parser failed: {0}")]
    ExternalParser(String),
    #[error("invalid chunk policy: {0}")]
    InvalidPolicy(String),
    #[error("chunk belongs to {chunk_parent}, not {parent}")]
    ParentMismatch { parent: String, chunk_parent: String },
    #[error("{pid} has no text to enrich")]
    NoText { pid: String },
    #[error("{pid} is a {kind}, expected image or audio")]
    WrongKind { pid: String, kind: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub chunk: ChunkPolicy,
    /// Command template for formats without a native parser; `{input}` is
    /// replaced by the file path and the command must print markdown.
    pub external_parser: Option<String>,
    /// Use file modification time when no sidecar timestamp is given
    /// (otherwise the Unix epoch, which keeps re-ingestion byte-stable).
    pub timestamp_from_mtime: bool,
}


/// Build, register and attach the L2 object for one chunk of `parent`.
pub fn encapsulate_l2(
    registry: &Registry,
    parent: &DigitalObject,
    chunk: &Chunk,
) -> Result<DigitalObject, IngestError> {
    if chunk.parent_pid != parent.pid {
        return Err(IngestError::ParentMismatch {
            parent: parent.pid.to_string(),
            chunk_parent: chunk.parent_pid.to_string(),
        });
    }
    let digest = sha256(chunk.text.as_bytes());
    let pid = mint_pid(parent.pid.domain(), &digest, Some(&parent.pid), Some(chunk.ordinal))?;
    let mut meta = parent.explicit_meta.clone();
    meta.media_type = "text/plain".into();
    let obj = DigitalObject {
        pid: pid.clone(),
        kind: ObjectKind::Chunk,
        payload_ref: parent.text_locator().clone(),
        text_ref: None,
        span: Some(CharSpan {
            start: chunk.start,
            end: chunk.end,
        }),
        content_sha256: Some(hex::encode(digest)),
        explicit_meta: meta,
        enriched_meta: None,
        children: vec![],
        parent: Some(parent.pid.clone()),
        created_at: parent.created_at,
        provenance: parent.provenance.clone(),
    };
    registry.register(obj.clone())?;
    registry.attach_child(&parent.pid, &pid)?;
    Ok(obj)
}

fn enrichment_provenance(gateway: &Gateway, tasks: &[Task]) -> EnrichmentProvenance {
    EnrichmentProvenance {
        model: gateway.model_id().to_string(),
        prompt_digest: Gateway::prompt_digest(tasks),
    }
}

const TEXT_TASKS: [Task; 4] = [
    Task::Summarize,
    Task::HypotheticalQuestions,
    Task::Classify,
    Task::Keywords,
];
const MEDIA_TASKS: [Task; 5] = [
    Task::DescribeMedia,
    Task::Summarize,
    Task::HypotheticalQuestions,
    Task::Classify,
    Task::Keywords,
];

fn enrich_from_text(
    object: &DigitalObject,
    text: &str,
    gateway: &Gateway,
) -> Result<(String, Vec<String>, BTreeSet<String>, BTreeSet<String>), GatewayError> {
    let summary = gateway.summarize(text)?;
    let questions: QuestionsOutput = gateway.complete(Task::HypotheticalQuestions, &TextInput { text: text.into() })?;
    let labels: LabelsOutput = gateway.complete(
        Task::Classify,
        &ClassifyInput {
            text: text.into(),
            domain: object.pid.domain().into(),
        },
    )?;
    let keywords = gateway.keywords(text, KEYWORDS_PER_OBJECT)?;
    Ok((
        summary,
        questions.questions,
        labels.labels.into_iter().collect(),
        keywords.into_iter().collect(),
    ))
}

/// Summary, hypothetical questions, labels and keywords for a text-bearing
/// object. Media objects go through [`describe_nontextual`] instead.
pub fn enrich_metadata(
    object: &DigitalObject,
    text: &str,
    highlights: Vec<String>,
    gateway: &Gateway,
) -> Result<EnrichedMetadata, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::NoText {
            pid: object.pid.to_string(),
        });
    }
    let (summary, hypothetical_questions, classification_labels, keywords) = enrich_from_text(object, text, gateway)?;
    Ok(EnrichedMetadata {
        summary,
        hypothetical_questions,
        classification_labels,
        keywords,
        multimodal_description: None,
        refinement_highlights: highlights,
        enrichment_provenance: enrichment_provenance(gateway, &TEXT_TASKS),
    })
}

/// Generated description of an image or audio object.
pub fn describe_nontextual(object: &DigitalObject, gateway: &Gateway) -> Result<String, IngestError> {
    if !matches!(object.kind, ObjectKind::Image | ObjectKind::Audio) {
        return Err(IngestError::WrongKind {
            pid: object.pid.to_string(),
            kind: object.kind.as_str().into(),
        });
    }
    let out: DescriptionOutput = gateway.complete(
        Task::DescribeMedia,
        &DescribeMediaInput {
            kind: object.kind.as_str().into(),
            byte_len: object.payload_ref.len,
            title: object.explicit_meta.title.clone(),
            media_type: object.explicit_meta.media_type.clone(),
        },
    )?;
    Ok(out.description)
}

/// Full enrichment of an image or audio object: the description is stored
/// as `multimodal_description` and also drives the text fields.
pub fn enrich_media(object: &DigitalObject, gateway: &Gateway) -> Result<EnrichedMetadata, IngestError> {
    let description = describe_nontextual(object, gateway)?;
    let (summary, hypothetical_questions, classification_labels, keywords) =
        enrich_from_text(object, &description, gateway)?;
    Ok(EnrichedMetadata {
        summary,
        hypothetical_questions,
        classification_labels,
        keywords,
        multimodal_description: Some(description),
        refinement_highlights: vec![],
        enrichment_provenance: enrichment_provenance(gateway, &MEDIA_TASKS),
    })
}
