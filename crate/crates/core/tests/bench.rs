mod common;

use std::collections::BTreeSet;

use iod_core::bench::{
    gen_synthetic, load_items, run_task, write_items, BenchConfig, BenchError, Hops, SynthSpec, Task1Item, Task2Item,
    Task3Item, TASK1_COLUMNS, TASK2_COLUMNS,
};

fn tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_seed_same_bytes() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    gen_synthetic(42, SynthSpec::default(), a.path()).unwrap();
    gen_synthetic(42, SynthSpec::default(), b.path()).unwrap();
    gen_synthetic(43, SynthSpec::default(), c.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn synthetic_labels_follow_construction() {
    let dir = tempfile::tempdir().unwrap();
    let m = gen_synthetic(42, SynthSpec::default(), dir.path()).unwrap();
    assert_eq!(m.docs.len(), 30);
    assert_eq!(m.domains.len(), 3);
    let t1: Vec<Task1Item> = load_items(&dir.path().join(&m.task1)).unwrap();
    let t2: Vec<Task2Item> = load_items(&dir.path().join(&m.task2)).unwrap();
    let t3: Vec<Task3Item> = load_items(&dir.path().join(&m.task3)).unwrap();
    assert_eq!((t1.len(), t2.len(), t3.len()), (20, 20, 5));
    let pids: BTreeSet<_> = m.docs.iter().map(|d| d.pid.clone()).collect();
    assert_eq!(pids.len(), 30);
    for it in &t1 {
        assert!(it.relevant_pids.is_subset(&pids));
    }
    let texts: Vec<(String, String)> = m
        .docs
        .iter()
        .map(|d| {
            (
                d.pid.to_string(),
                std::fs::read_to_string(dir.path().join(&d.path)).unwrap(),
            )
        })
        .collect();
    for it in &t2 {
        let key = it.answer_key.as_ref().unwrap();
        assert!(!it.question.contains(key.as_str()), "question leaks its answer");
        for g in &it.gold_contexts {
            assert!(texts.iter().any(|(_, t)| t.contains(g.as_str())));
        }
        let holders: Vec<_> = texts
            .iter()
            .filter(|(_, t)| t.contains(key.as_str()))
            .map(|(p, _)| p)
            .collect();
        assert!(!holders.is_empty());
        assert!(holders
            .iter()
            .all(|p| it.source_pids.iter().any(|s| s.to_string() == **p)));
        if it.hops == Hops::Multi {
            assert_eq!(it.source_pids.len(), 2);
            assert!(it.cross_domain && it.domains.len() == 2);
        }
    }
    assert_eq!(t2.iter().filter(|i| i.hops == Hops::Multi).count(), 10);
}

#[test]
fn malformed_line_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t1.jsonl");
    let ok = Task1Item {
        id: Some("a".into()),
        question: "q".into(),
        relevant_pids: BTreeSet::from(["iod:x/0123456789abcdef".parse().unwrap()]),
    };
    write_items(&p, &[ok]).unwrap();
    let mut body = std::fs::read_to_string(&p).unwrap();
    body.push_str("\n{\"question\": \"q2\"}\n");
    std::fs::write(&p, body).unwrap();
    match load_items::<Task1Item>(&p) {
        Err(BenchError::Dataset { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    std::fs::write(
        &p,
        "{\"question\": \"\", \"relevant_pids\": [\"iod:x/0123456789abcdef\"]}\n",
    )
    .unwrap();
    match load_items::<Task1Item>(&p) {
        Err(BenchError::Dataset { line, message, .. }) => {
            assert_eq!(line, 1);
            assert!(message.contains("question"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn tasks_score_the_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::build_synthetic(dir.path(), 42, SynthSpec::default());
    let data = dir.path().join("data");
    let cfg = BenchConfig {
        seed: Some(42),
        ..BenchConfig::default()
    };

    let r1 = run_task(1, &data.join("task1.jsonl"), &b.env, &cfg).unwrap();
    assert_eq!(r1.columns, TASK1_COLUMNS);
    assert_eq!(r1.rows.len(), 20);
    assert!(r1.aggregate["recall"] >= 90.0, "{}", r1.summary_line());

    let r2 = run_task(2, &data.join("task2.jsonl"), &b.env, &cfg).unwrap();
    assert_eq!(r2.columns, TASK2_COLUMNS);
    for row in &r2.rows {
        for v in row.scores.values() {
            assert!((0.0..=100.0).contains(v));
        }
    }
    assert_eq!(r2.aggregate["accuracy"], 100.0, "{}", r2.render_table());
    assert_eq!(r2.aggregate["faithfulness"], 100.0);
    assert_eq!(r2.aggregate["ctx_recall"], 100.0);

    let r3 = run_task(3, &data.join("task3.jsonl"), &b.env, &cfg).unwrap();
    assert_eq!(r3.rows.len(), 5);
    for row in &r3.rows {
        for v in row.scores.values() {
            assert!((0.0..=10.0).contains(v));
        }
    }
    assert_eq!(r3.config.judge_runs, 3);

    let stem = dir.path().join("out/task2");
    std::fs::create_dir_all(stem.parent().unwrap()).unwrap();
    r2.write(&stem).unwrap();
    let back: iod_core::bench::MetricReport =
        serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
    assert_eq!(back, r2);
    assert!(std::fs::read_to_string(stem.with_extension("md"))
        .unwrap()
        .contains("| mean |"));
}

#[test]
fn metric_reports_are_byte_identical_across_runs() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let b = common::build_synthetic(dir.path(), 42, SynthSpec::default());
        let data = dir.path().join("data");
        (1..=3u8)
            .map(|t| {
                run_task(t, &data.join(format!("task{t}.jsonl")), &b.env, &BenchConfig::default())
                    .unwrap()
                    .to_json()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn unknown_relevant_pid_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let b = common::build_synthetic(
        dir.path(),
        1,
        SynthSpec {
            domains: 1,
            docs_per_domain: 2,
            questions: 1,
        },
    );
    let p = dir.path().join("bad.jsonl");
    write_items(
        &p,
        &[Task1Item {
            id: None,
            question: "anything".into(),
            relevant_pids: BTreeSet::from(["iod:nowhere/0123456789abcdef".parse().unwrap()]),
        }],
    )
    .unwrap();
    assert!(run_task(1, &p, &b.env, &BenchConfig::default()).is_err());
    assert!(matches!(
        run_task(4, &p, &b.env, &BenchConfig::default()),
        Err(BenchError::UnknownTask(_))
    ));
}
