mod common;

use std::sync::Arc;

use iod_core::bench::SynthSpec;
use iod_core::llm_gateway::Gateway;
use iod_core::object_store::{Level, ObjectKind};
use iod_core::retrieval::{RetrievalQuery, Strategy, Tier};
use iod_core::workspace::{Workspace, WorkspaceConfig, WorkspaceError};

fn small() -> SynthSpec {
    SynthSpec {
        domains: 2,
        docs_per_domain: 4,
        questions: 4,
    }
}

#[test]
fn reingest_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::build_synthetic(dir.path(), 5, small());
    let ws = &b.workspace;
    let objects = std::fs::read(ws.root().join("objects.jsonl")).unwrap();
    let n = ws.registry().len();
    let data = dir.path().join("data");
    for d in &b.manifest.domains {
        let again = ws.ingest_dir(&b.manifest.corpus_dir(&data, d), d).unwrap();
        assert_eq!(again.objects, 4);
    }
    assert_eq!(ws.registry().len(), n);
    assert_eq!(std::fs::read(ws.root().join("objects.jsonl")).unwrap(), objects);
}

#[test]
fn ingested_objects_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::build_synthetic(dir.path(), 5, small());
    for d in &b.manifest.docs {
        let o = b
            .env
            .retriever
            .object(&d.pid)
            .expect("registered under the planted pid");
        assert_eq!(o.kind, ObjectKind::Document);
        assert_eq!(o.explicit_meta.title, d.title);
        assert_eq!(
            o.explicit_meta.source,
            format!("synthetic://{}/{}", d.domain, d.path.rsplit('/').next().unwrap())
        );
        assert!(!o.children.is_empty());
        let em = o.enriched_meta.as_ref().expect("enriched");
        for f in &d.facts {
            assert!(
                em.refinement_highlights.iter().any(|h| h.contains(&f.value)),
                "{:?}",
                em.refinement_highlights
            );
        }
    }
    let l2 = b
        .workspace
        .registry()
        .objects()
        .iter()
        .filter(|o| o.pid.level() == Level::L2)
        .count();
    let m = b.workspace.manifest().unwrap();
    assert_eq!(m.objects, b.manifest.docs.len());
    assert_eq!(m.chunks, l2);
    assert!(m.nodes > 0 && m.facts >= 2 * b.manifest.docs.len());
    assert_eq!(m.dim, 64);
}

#[test]
fn reopened_workspace_serves_same_results() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::build_synthetic(dir.path(), 5, small());
    let q = RetrievalQuery::new(&b.manifest.docs[0].title, Tier::Chunk, Strategy::Hybrid);
    let first = b.env.retriever.search(&q).unwrap();
    let ws = Workspace::open(
        b.workspace.root(),
        Arc::new(Gateway::mock()),
        WorkspaceConfig::default(),
    )
    .unwrap();
    let again = ws.retriever().unwrap().search(&q).unwrap();
    assert_eq!(first, again);
}

#[test]
fn rebuilding_the_index_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::build_synthetic(dir.path(), 5, small());
    let files = [
        "kg_nodes.jsonl",
        "kg_edges.jsonl",
        "facts.jsonl",
        "embeddings.bin",
        "index.json",
        "hetero_graph.jsonl",
    ];
    let read = || files.map(|f| std::fs::read(b.workspace.root().join(f)).unwrap());
    let before = read();
    b.workspace.build_index().unwrap();
    assert_eq!(before, read());
}

#[test]
fn bad_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(
        dir.path().join("ws"),
        Arc::new(Gateway::mock()),
        WorkspaceConfig::default(),
    )
    .unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    std::fs::write(src.join("a.md"), "# A\n\nSome text about Zorvanite.\n").unwrap();
    assert!(matches!(
        ws.ingest_dir(&src, "Bad Domain"),
        Err(WorkspaceError::InvalidDomain(_))
    ));
    std::fs::write(src.join("a.md.meta.json"), r#"{"title":"A","colour":"red"}"#).unwrap();
    assert!(matches!(
        ws.ingest_dir(&src, "notes"),
        Err(WorkspaceError::Sidecar { .. })
    ));
    assert!(matches!(ws.retriever(), Err(WorkspaceError::NotIndexed(_))));
}

#[test]
fn table_and_image_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(
        dir.path().join("ws"),
        Arc::new(Gateway::mock()),
        WorkspaceConfig::default(),
    )
    .unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    std::fs::write(src.join("t.csv"), "name,value\nalpha,1\nbeta,2\n").unwrap();
    std::fs::write(src.join("p.png"), [0x89, b'P', b'N', b'G', 0, 1, 2, 3]).unwrap();
    let s = ws.ingest_dir(&src, "lab").unwrap();
    assert_eq!(s.objects, 2);
    let kinds: Vec<ObjectKind> = ws
        .registry()
        .objects()
        .iter()
        .filter(|o| o.pid.level() == Level::L1)
        .map(|o| o.kind)
        .collect();
    assert!(kinds.contains(&ObjectKind::Table));
    assert!(kinds.contains(&ObjectKind::Image));
    ws.build_index().unwrap();
    let r = ws.retriever().unwrap();
    let hits = r
        .search(&RetrievalQuery::new(
            "alpha beta value",
            Tier::Object,
            Strategy::Keyword,
        ))
        .unwrap();
    assert_eq!(hits[0].metadata.kind, "table");
}
