#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use iod_core::agents::{AgentConfig, ResearchEnv};
use iod_core::bench::{gen_synthetic, SynthManifest, SynthSpec};
use iod_core::llm_gateway::Gateway;
use iod_core::workspace::{Workspace, WorkspaceConfig};

pub struct Built {
    pub manifest: SynthManifest,
    pub workspace: Workspace,
    pub env: ResearchEnv,
}

/// Generate the seeded corpus under `dir/data`, ingest it per domain into
/// `dir/ws`, build the index and return a research environment over it.
pub fn build_synthetic(dir: &Path, seed: u64, spec: SynthSpec) -> Built {
    let data = dir.join("data");
    let manifest = gen_synthetic(seed, spec, &data).unwrap();
    let gw = Arc::new(Gateway::mock());
    let ws = Workspace::open(dir.join("ws"), gw.clone(), WorkspaceConfig::default()).unwrap();
    for d in &manifest.domains {
        ws.ingest_dir(&manifest.corpus_dir(&data, d), d).unwrap();
    }
    ws.build_index().unwrap();
    let retriever = Arc::new(ws.retriever().unwrap());
    let env = ResearchEnv {
        retriever,
        store: ws.registry().clone(),
        config: AgentConfig::default(),
    };
    Built {
        manifest,
        workspace: ws,
        env,
    }
}
