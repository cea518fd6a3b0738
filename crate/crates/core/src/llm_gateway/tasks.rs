//! Request and response payloads for each gateway task.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Summarize,
    Keywords,
    HypotheticalQuestions,
    Classify,
    DescribeMedia,
    ExtractEntities,
    ExtractRelations,
    ExtractFacts,
    Plan,
    FilterRelevance,
    SummarizeEvidence,
    Write,
    CheckClaims,
    Judge,
}

impl Task {
    pub const ALL: [Task; 14] = [
        Task::Summarize,
        Task::Keywords,
        Task::HypotheticalQuestions,
        Task::Classify,
        Task::DescribeMedia,
        Task::ExtractEntities,
        Task::ExtractRelations,
        Task::ExtractFacts,
        Task::Plan,
        Task::FilterRelevance,
        Task::SummarizeEvidence,
        Task::Write,
        Task::CheckClaims,
        Task::Judge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Summarize => "summarize",
            Task::Keywords => "keywords",
            Task::HypotheticalQuestions => "hypothetical_questions",
            Task::Classify => "classify",
            Task::DescribeMedia => "describe_media",
            Task::ExtractEntities => "extract_entities",
            Task::ExtractRelations => "extract_relations",
            Task::ExtractFacts => "extract_facts",
            Task::Plan => "plan",
            Task::FilterRelevance => "filter_relevance",
            Task::SummarizeEvidence => "summarize_evidence",
            Task::Write => "write",
            Task::CheckClaims => "check_claims",
            Task::Judge => "judge",
        }
    }

    pub fn prompt_template(self) -> &'static str {
        match self {
            Task::Summarize => include_str!("../../prompts/summarize.txt"),
            Task::Keywords => include_str!("../../prompts/keywords.txt"),
            Task::HypotheticalQuestions => include_str!("../../prompts/hypothetical_questions.txt"),
            Task::Classify => include_str!("../../prompts/classify.txt"),
            Task::DescribeMedia => include_str!("../../prompts/describe_media.txt"),
            Task::ExtractEntities => include_str!("../../prompts/extract_entities.txt"),
            Task::ExtractRelations => include_str!("../../prompts/extract_relations.txt"),
            Task::ExtractFacts => include_str!("../../prompts/extract_facts.txt"),
            Task::Plan => include_str!("../../prompts/plan.txt"),
            Task::FilterRelevance => include_str!("../../prompts/filter_relevance.txt"),
            Task::SummarizeEvidence => include_str!("../../prompts/summarize_evidence.txt"),
            Task::Write => include_str!("../../prompts/write.txt"),
            Task::CheckClaims => include_str!("../../prompts/check_claims.txt"),
            Task::Judge => include_str!("../../prompts/judge.txt"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextInput {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordsInput {
    pub text: String,
    pub max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyInput {
    pub text: String,
    pub domain: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescribeMediaInput {
    pub kind: String,
    pub byte_len: u64,
    pub title: String,
    pub media_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationsInput {
    pub text: String,
    pub entities: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanInput {
    pub query: String,
    pub domain_keywords: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdText {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelevanceInput {
    pub query: String,
    pub items: Vec<IdText>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexedText {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceInput {
    pub query: String,
    pub items: Vec<IndexedText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub text: String,
    pub marker: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WriteSectionInput {
    pub heading: String,
    pub points: Vec<MarkedPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimStatusInput {
    pub claim: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WriteInput {
    pub query: String,
    pub mode: String,
    pub sections: Vec<WriteSectionInput>,
    #[serde(default)]
    pub draft: Option<WriteOutput>,
    #[serde(default)]
    pub findings: Vec<ClaimStatusInput>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckInput {
    pub claims: Vec<String>,
    pub evidence: Vec<IndexedText>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeInput {
    pub topic: String,
    pub report: String,
    pub dimensions: Vec<String>,
    pub run: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOutput {
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordsOutput {
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsOutput {
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsOutput {
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionOutput {
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityOut {
    pub name: String,
    pub entity_type: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitiesOutput {
    pub entities: Vec<EntityOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationOut {
    pub source: String,
    pub target: String,
    pub keywords: Vec<String>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationsOutput {
    pub relations: Vec<RelationOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactOut {
    pub subject: String,
    pub attribute: String,
    pub value: String,
    #[serde(default)]
    pub unit: Option<String>,
    #[serde(default)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactsOutput {
    pub facts: Vec<FactOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarifyOut {
    pub question: String,
    #[serde(default)]
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStepOut {
    pub kind: String,
    pub description: String,
    #[serde(default)]
    pub query: Option<String>,
    #[serde(default)]
    pub tier: Option<String>,
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub depends_on: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    #[serde(default)]
    pub clarify: Option<ClarifyOut>,
    #[serde(default)]
    pub steps: Vec<PlanStepOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceOutput {
    pub relevant: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePointOut {
    pub text: String,
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceOutput {
    pub summary: String,
    pub points: Vec<EvidencePointOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionOut {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteOutput {
    pub title: String,
    pub sections: Vec<SectionOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingOut {
    pub claim: String,
    pub status: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutput {
    pub findings: Vec<FindingOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutput {
    pub scores: BTreeMap<String, f64>,
}
