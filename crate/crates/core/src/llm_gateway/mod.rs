//! Completion and embedding calls against a model endpoint.
//!
//! [`Gateway`] is the only entry point. It wraps a [`ModelBackend`] (the
//! deterministic [`MockBackend`] or the chat-completions [`HttpBackend`])
//! with a parallelism limit, retries on transport failures, response schema
//! validation and per-task usage counters.

mod http;
pub mod mock;
pub mod tasks;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::MockBackend;
pub use tasks::Task;

use crate::digest::sha256_hex;
use tasks::*;

pub const DEFAULT_EMBED_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("model call timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("{task:?} response does not match its schema: {message}; raw output: {raw}")]
    Schema { task: Task, message: String, raw: String },
    #[error("invalid {task:?} request: {message}")]
    InvalidRequest { task: Task, message: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension {got} differs from configured {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gateway misconfigured: {0}")]
    Config(String),
}

impl GatewayError {
    fn retryable(&self) -> bool {
        matches!(self, GatewayError::Timeout | GatewayError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_output: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 0.0,
            max_output: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayRequest {
    pub task: Task,
    pub input: serde_json::Value,
    pub params: GenParams,
}

pub trait ModelBackend: Send + Sync {
    fn model_id(&self) -> &str;
    /// Raw model output text for a request.
    fn complete(&self, request: &GatewayRequest) -> Result<String, GatewayError>;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub embed_model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    pub mock: bool,
    pub embed_dim: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            endpoint: None,
            model: "qwen-turbo".into(),
            embed_model: None,
            api_key_env: "IOD_LLM_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 2,
            parallelism: 4,
            mock: false,
            embed_dim: DEFAULT_EMBED_DIM,
        }
    }
}

impl GatewayConfig {
    pub fn mock() -> Self {
        GatewayConfig {
            mock: true,
            ..Default::default()
        }
    }

    /// Overlay `IOD_LLM_ENDPOINT`, `IOD_LLM_MODEL`, `IOD_EMBED_DIM` and
    /// `IOD_MOCK` from the environment.
    pub fn apply_env(mut self) -> Self {
        if let Ok(v) = std::env::var("IOD_LLM_ENDPOINT") {
            if !v.trim().is_empty() {
                self.endpoint = Some(v);
            }
        }
        if let Ok(v) = std::env::var("IOD_LLM_MODEL") {
            self.model = v;
        }
        if let Some(d) = std::env::var("IOD_EMBED_DIM").ok().and_then(|v| v.parse().ok()) {
            self.embed_dim = d;
        }
        if std::env::var("IOD_MOCK").is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true")) {
            self.mock = true;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskUsage {
    pub calls: u64,
    pub input_units: u64,
    pub output_units: u64,
}

#[derive(Default)]
struct Counter {
    calls: AtomicU64,
    input_units: AtomicU64,
    output_units: AtomicU64,
}

impl Counter {
    fn add(&self, input: u64, output: u64) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.input_units.fetch_add(input, Ordering::Relaxed);
        self.output_units.fetch_add(output, Ordering::Relaxed);
    }

    fn snapshot(&self) -> TaskUsage {
        TaskUsage {
            calls: self.calls.load(Ordering::Relaxed),
            input_units: self.input_units.load(Ordering::Relaxed),
            output_units: self.output_units.load(Ordering::Relaxed),
        }
    }
}

/// Counting semaphore bounding concurrent backend calls.
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Usage key for embedding calls (not a completion task).
pub const EMBED_USAGE_KEY: &str = "embed";

pub struct Gateway {
    backend: Box<dyn ModelBackend>,
    max_retries: u32,
    embed_dim: usize,
    semaphore: Semaphore,
    counters: BTreeMap<&'static str, Counter>,
}

impl Gateway {
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let backend: Box<dyn ModelBackend> = if config.mock {
            Box::new(MockBackend::new(config.embed_dim))
        } else {
            Box::new(HttpBackend::new(config)?)
        };
        Ok(Self::with_backend(backend, config))
    }

    pub fn mock() -> Self {
        Self::new(&GatewayConfig::mock()).expect("mock gateway")
    }

    pub fn with_backend(backend: Box<dyn ModelBackend>, config: &GatewayConfig) -> Self {
        let mut counters: BTreeMap<&'static str, Counter> =
            Task::ALL.iter().map(|t| (t.name(), Counter::default())).collect();
        counters.insert(EMBED_USAGE_KEY, Counter::default());
        Gateway {
            backend,
            max_retries: config.max_retries,
            embed_dim: config.embed_dim,
            semaphore: Semaphore::new(config.parallelism),
            counters,
        }
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Digest identifying the prompt templates of the given tasks.
    pub fn prompt_digest(tasks: &[Task]) -> String {
        let joined: String = tasks.iter().map(|t| t.prompt_template()).collect();
        sha256_hex(joined.as_bytes())[..16].to_string()
    }

    fn with_retries<T>(&self, mut f: impl FnMut() -> Result<T, GatewayError>) -> Result<T, GatewayError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.semaphore.acquire();
                f()
            };
            match result {
                Err(e) if e.retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    tracing::warn!(attempt, error = %e, "retrying model call");
                }
                other => return other,
            }
        }
    }

    /// Send a raw request and return the unparsed model output.
    pub fn complete_raw(&self, request: &GatewayRequest) -> Result<String, GatewayError> {
        let raw = self.with_retries(|| self.backend.complete(request))?;
        let input_units = request.input.to_string().chars().count() as u64;
        self.counters[request.task.name()].add(input_units, raw.chars().count() as u64);
        Ok(raw)
    }

    /// Typed completion: serialize the input, parse the output against the
    /// task's response schema.
    pub fn complete<I: Serialize, O: DeserializeOwned>(&self, task: Task, input: &I) -> Result<O, GatewayError> {
        let request = GatewayRequest {
            task,
            input: serde_json::to_value(input).map_err(|e| GatewayError::InvalidRequest {
                task,
                message: e.to_string(),
            })?,
            params: GenParams::default(),
        };
        let raw = self.complete_raw(&request)?;
        parse_response(task, &raw)
    }

    /// Embed texts as unit vectors of the configured dimension.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(GatewayError::EmptyText);
        }
        let vectors = self.with_retries(|| self.backend.embed(texts))?;
        let units: u64 = texts.iter().map(|t| t.chars().count() as u64).sum();
        self.counters[EMBED_USAGE_KEY].add(units, vectors.len() as u64);
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.embed_dim {
                    return Err(GatewayError::DimensionMismatch {
                        expected: self.embed_dim,
                        got: v.len(),
                    });
                }
                normalize(v)
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f32>, GatewayError> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }

    /// Per-task usage counters; every task is present, zero when unused.
    pub fn usage(&self) -> BTreeMap<String, TaskUsage> {
        self.counters
            .iter()
            .map(|(k, c)| (k.to_string(), c.snapshot()))
            .collect()
    }

    /// Total completion calls (embedding calls excluded).
    pub fn completion_calls(&self) -> u64 {
        self.counters
            .iter()
            .filter(|(k, _)| **k != EMBED_USAGE_KEY)
            .map(|(_, c)| c.calls.load(Ordering::Relaxed))
            .sum()
    }

    pub fn summarize(&self, text: &str) -> Result<String, GatewayError> {
        let o: SummaryOutput = self.complete(Task::Summarize, &TextInput { text: text.into() })?;
        Ok(o.summary)
    }

    pub fn keywords(&self, text: &str, max: usize) -> Result<Vec<String>, GatewayError> {
        let o: KeywordsOutput = self.complete(Task::Keywords, &KeywordsInput { text: text.into(), max })?;
        Ok(o.keywords)
    }
}

fn normalize(v: Vec<f32>) -> Result<Vec<f32>, GatewayError> {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(GatewayError::Transport("degenerate embedding vector".into()));
    }
    Ok(v.into_iter().map(|x| (f64::from(x) / norm) as f32).collect())
}

/// Parse raw model output as the task's response type. Tolerates a fenced
/// ```json block around the object.
pub fn parse_response<O: DeserializeOwned>(task: Task, raw: &str) -> Result<O, GatewayError> {
    let trimmed = raw.trim();
    let body = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    serde_json::from_str(body.trim()).map_err(|e| GatewayError::Schema {
        task,
        message: e.to_string(),
        raw: raw.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    #[test]
    fn mock_summarize_takes_two_sentences() {
        let g = Gateway::mock();
        assert_eq!(g.summarize("A. B. C.").unwrap(), "A. B.");
    }

    #[test]
    fn mock_keywords_on_ti3sic2_passage() {
        // Hand count: Ti3SiC2 x3, phase x2, then singletons in first-appearance order.
        let g = Gateway::mock();
        let kw = g
            .keywords(
                "Ti3SiC2 is a MAX phase. Ti3SiC2 melts late. The Ti3SiC2 phase is stiff.",
                5,
            )
            .unwrap();
        assert_eq!(kw, vec!["Ti3SiC2", "phase", "MAX", "melts", "late"]);
    }

    #[test]
    fn single_token_embeds_one_hot() {
        // FNV-1a-64("alpha") mod 64 = 43 (independent Python computation).
        let g = Gateway::mock();
        let v = g.embed_one("alpha alpha").unwrap();
        assert_eq!(v.len(), 64);
        assert!((v[43] - 1.0).abs() < 1e-6);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn embeddings_are_unit_and_deterministic() {
        let g = Gateway::mock();
        let vs = g
            .embed(&["x".into(), "x".into(), "a longer sentence about rocks".into()])
            .unwrap();
        assert_eq!(vs[0], vs[1]);
        for v in vs {
            let n: f64 = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert!(matches!(g.embed(&["  ".into()]), Err(GatewayError::EmptyText)));
    }

    #[test]
    fn usage_counts_calls() {
        let g = Gateway::mock();
        assert!(g.usage().values().all(|u| *u == TaskUsage::default()));
        for _ in 0..3 {
            g.summarize("One. Two.").unwrap();
        }
        assert_eq!(g.usage()["summarize"].calls, 3);
        assert_eq!(g.completion_calls(), 3);
    }

    #[test]
    fn usage_is_exact_under_concurrency() {
        let g = Arc::new(Gateway::mock());
        let issued = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let g = g.clone();
                let issued = issued.clone();
                std::thread::spawn(move || {
                    for i in 0..50 {
                        g.summarize(&format!("Thread {t}. Call {i}.")).unwrap();
                        issued.fetch_add(1, Ordering::SeqCst);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(g.usage()["summarize"].calls as usize, issued.load(Ordering::SeqCst));
    }

    struct Flaky {
        failures_left: Mutex<u32>,
        reply: String,
    }

    impl ModelBackend for Flaky {
        fn model_id(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &GatewayRequest) -> Result<String, GatewayError> {
            let mut f = self.failures_left.lock().unwrap();
            if *f > 0 {
                *f -= 1;
                return Err(GatewayError::Transport("connection reset".into()));
            }
            Ok(self.reply.clone())
        }
        fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
            Ok(vec![vec![0.0; 3]])
        }
    }

    #[test]
    fn retries_transport_failures_up_to_limit() {
        let cfg = GatewayConfig::default();
        let g = Gateway::with_backend(
            Box::new(Flaky {
                failures_left: Mutex::new(2),
                reply: r#"{"summary":"ok"}"#.into(),
            }),
            &cfg,
        );
        assert_eq!(g.summarize("x").unwrap(), "ok");
        let g = Gateway::with_backend(
            Box::new(Flaky {
                failures_left: Mutex::new(3),
                reply: r#"{"summary":"ok"}"#.into(),
            }),
            &cfg,
        );
        assert!(matches!(g.summarize("x"), Err(GatewayError::Transport(_))));
    }

    #[test]
    fn schema_violation_carries_raw_output() {
        let g = Gateway::with_backend(
            Box::new(Flaky {
                failures_left: Mutex::new(0),
                reply: "I think the summary is: rocks".into(),
            }),
            &GatewayConfig::default(),
        );
        match g.summarize("x") {
            Err(GatewayError::Schema { raw, .. }) => assert!(raw.contains("rocks")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = Gateway::with_backend(
            Box::new(Flaky {
                failures_left: Mutex::new(0),
                reply: String::new(),
            }),
            &GatewayConfig::default(),
        );
        assert!(matches!(
            g.embed_one("x"),
            Err(GatewayError::DimensionMismatch { expected: 64, got: 3 })
        ));
    }
}
