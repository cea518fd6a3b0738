//! `iod.toml`: every section optional, unknown keys rejected.
//!
//! ```toml
//! workspace = "data/ws"
//! log_dir = "data/sessions"
//!
//! [gateway]
//! endpoint = "http://localhost:8000/v1"
//! model = "qwen-turbo"
//!
//! [ingestion]
//! [index]
//! [agents]
//! [bench]
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use iod_core::agents::AgentConfig;
use iod_core::bench::BenchConfig;
use iod_core::ingestion::IngestConfig;
use iod_core::llm_gateway::GatewayConfig;
use iod_core::workspace::{IndexConfig, WorkspaceConfig};
use serde::Deserialize;

pub const DEFAULT_WORKSPACE: &str = ".iod";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub workspace: Option<PathBuf>,
    /// Session event logs; defaults to `{workspace}/sessions`.
    pub log_dir: Option<PathBuf>,
    pub gateway: GatewayConfig,
    pub ingestion: IngestConfig,
    pub index: IndexConfig,
    pub agents: AgentConfig,
    pub bench: BenchConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn workspace_config(&self) -> WorkspaceConfig {
        WorkspaceConfig {
            gateway: self.gateway.clone().apply_env(),
            ingestion: self.ingestion.clone(),
            index: self.index.clone(),
        }
    }
}
