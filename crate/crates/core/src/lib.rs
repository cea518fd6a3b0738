//! Private-data deep research: digital-object ingestion, knowledge
//! refinement, heterogeneous graph indexing, multi-strategy retrieval,
//! research agents and evaluation.

pub mod agents;
pub mod bench;
pub mod digest;
pub mod hetero_index;
pub mod ingestion;
pub mod llm_gateway;
pub mod object_store;
pub mod refinement;
pub mod retrieval;
pub mod text;
pub mod workspace;
