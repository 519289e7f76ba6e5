use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pan_core::descriptor::{read_pane, write_pane, DescriptorMeta, EmbeddingFile, SidecarRow};
use pan_core::retrieval::{write_pand, DistanceMatrix};
use serde_json::{json, Value};

fn pan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pan"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = pan(args);
    assert!(
        out.status.success(),
        "pan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn meta(sample_id: u32, identity: u32, camera: u16) -> DescriptorMeta {
    DescriptorMeta {
        sample_id,
        identity,
        camera,
    }
}

fn write_embeddings(path: &Path, metas: &[DescriptorMeta]) {
    let mut f = EmbeddingFile::new(2, 1);
    let mut rows = Vec::new();
    for m in metas {
        f.push(*m, &[m.identity as f64, 1.0], &[m.camera as f64])
            .unwrap();
        rows.push(SidecarRow {
            sample_id: m.sample_id,
            path: format!("{}.png", m.sample_id),
        });
    }
    write_pane(path, &f, &rows).unwrap();
}

/// Three queries against six gallery items with hand-computed results.
fn fixture_ranks(dir: &Path) {
    let q = [meta(0, 1, 1), meta(1, 2, 1), meta(2, 3, 2)];
    let g = [
        meta(3, 1, 2),
        meta(4, 2, 2),
        meta(5, 1, 1),
        meta(6, 3, 1),
        meta(7, 2, 1),
        meta(8, 4, 2),
    ];
    write_embeddings(&dir.join("query.pane"), &q);
    write_embeddings(&dir.join("gallery.pane"), &g);
    #[rustfmt::skip]
    let d = vec![
        0.5, 0.1, 0.0, 0.9, 0.3, 0.2,
        0.2, 0.4, 0.6, 0.1, 0.0, 0.8,
        0.7, 0.6, 0.5, 0.05, 0.4, 0.3,
    ];
    write_pand(
        &dir.join("dist.pand"),
        &DistanceMatrix::new(3, 6, d).unwrap(),
    )
    .unwrap();
    let run = json!({
        "version": "pan 0.1.0",
        "query": "query.pane",
        "gallery": "gallery.pane",
        "alpha": 0.5,
        "rerank": null,
        "cross_camera_only": true,
    });
    fs::write(dir.join("run.json"), run.to_string()).unwrap();
}

#[test]
fn eval_reproduces_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    fixture_ranks(dir.path());
    let report = dir.path().join("report.json");
    ok(&["eval", "--ranks", s(dir.path()), "--out", s(&report)]);
    let r: Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert!((r["mAP"].as_f64().unwrap() - 19.0 / 36.0).abs() < 1e-12);
    assert_eq!(r["rank_accuracy"]["1"].as_f64().unwrap(), 1.0 / 3.0);
    assert_eq!(r["rank_accuracy"]["5"].as_f64().unwrap(), 1.0);
    let csv = fs::read_to_string(dir.path().join("report.cmc.csv")).unwrap();
    assert!(csv.starts_with("rank,accuracy\n1,0.3333"), "{csv}");
}

#[test]
fn alpha_sweep_writes_one_row_per_weight() {
    let dir = tempfile::tempdir().unwrap();
    fixture_ranks(dir.path());
    let report = dir.path().join("report.json");
    ok(&[
        "eval",
        "--ranks",
        s(dir.path()),
        "--out",
        s(&report),
        "--alpha-sweep",
        "0:1:0.25",
    ]);
    let csv = fs::read_to_string(dir.path().join("report.sweep.csv")).unwrap();
    let alphas: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(alphas, ["0", "0.25", "0.5", "0.75", "1"]);
}

fn orderings(ranks_jsonl: &Path) -> Vec<Value> {
    fs::read_to_string(ranks_jsonl)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["gallery"].clone())
        .collect()
}

#[test]
fn zero_lambda_rerank_keeps_plain_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let q: Vec<_> = (0..6).map(|i| meta(i, i % 3, 1 + (i % 2) as u16)).collect();
    let g: Vec<_> = (6..20)
        .map(|i| meta(i, i % 4, 1 + (i % 3) as u16))
        .collect();
    let (qp, gp) = (dir.path().join("q.pane"), dir.path().join("g.pane"));
    write_embeddings(&qp, &q);
    write_embeddings(&gp, &g);
    let (plain, zero) = (dir.path().join("plain"), dir.path().join("zero"));
    ok(&[
        "rank",
        "--query",
        s(&qp),
        "--gallery",
        s(&gp),
        "--out",
        s(&plain),
    ]);
    ok(&[
        "rank",
        "--query",
        s(&qp),
        "--gallery",
        s(&gp),
        "--out",
        s(&zero),
        "--rerank",
        "--k",
        "3",
        "--lambda",
        "0",
    ]);
    assert_eq!(
        orderings(&plain.join("ranks.jsonl")),
        orderings(&zero.join("ranks.jsonl"))
    );
    assert!(zero.join("dist_reranked.pand").exists());
}

fn pipeline(root: &Path) -> Vec<u8> {
    let spec = root.join("spec.json");
    let spec_json = json!({
        "n_train_ids": 4, "n_test_ids": 3, "images_per_id": 8, "height": 16, "width": 8, "seed": 3,
    });
    fs::write(&spec, spec_json.to_string()).unwrap();
    let config = root.join("net.json");
    let net_json = json!({
        "base_channels": [4, 6, 8, 8], "align_channels": [6, 8], "grid_channels": 4,
        "batch_size": 8, "lr_main": 0.01, "total_epochs": 3, "lr_decay_epoch": 2,
    });
    fs::write(&config, net_json.to_string()).unwrap();
    let (corpus, model, emb, ranks) = (
        root.join("corpus"),
        root.join("model"),
        root.join("emb"),
        root.join("ranks"),
    );
    ok(&["gen", "--spec", s(&spec), "--out", s(&corpus)]);
    ok(&[
        "train",
        "--corpus",
        s(&corpus),
        "--out",
        s(&model),
        "--config",
        s(&config),
    ]);
    let ckpt = model.join("model.panw");
    assert_eq!(
        fs::read_to_string(model.join("train.jsonl"))
            .unwrap()
            .lines()
            .count(),
        6
    );
    for split in ["q", "g"] {
        let out = emb.join(format!("{split}.pane"));
        ok(&[
            "embed",
            "--ckpt",
            s(&ckpt),
            "--corpus",
            s(&corpus),
            "--split",
            split,
            "--out",
            s(&out),
        ]);
    }
    let q = read_pane(&emb.join("q.pane")).unwrap();
    assert_eq!((q.dim1, q.dim2, q.records.len()), (8, 8, 12));
    ok(&[
        "rank",
        "--query",
        s(&emb.join("q.pane")),
        "--gallery",
        s(&emb.join("g.pane")),
        "--out",
        s(&ranks),
        "--rerank",
        "--k",
        "4",
    ]);
    let report = root.join("report.json");
    ok(&["eval", "--ranks", s(&ranks), "--out", s(&report)]);

    let vis = root.join("vis");
    ok(&[
        "visualize",
        "--ckpt",
        s(&ckpt),
        "--images",
        s(&corpus.join("query")),
        "--out",
        s(&vis),
    ]);
    assert_eq!(fs::read_dir(&vis).unwrap().count(), 12);
    fs::read(report).unwrap()
}

#[test]
fn full_pipeline_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    assert_eq!(ra, rb);
    let r: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(r["num_queries"], 12);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(pan(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pan(&["rank", "--query", "x"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    fixture_ranks(dir.path());
    let out = dir.path().join("r.json");
    let code = pan(&[
        "eval",
        "--ranks",
        s(dir.path()),
        "--out",
        s(&out),
        "--alpha-sweep",
        "1:0:0.1",
    ])
    .status
    .code();
    assert_eq!(code, Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = pan(&[
        "eval",
        "--ranks",
        s(&dir.path().join("missing")),
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("pan: "));

    fs::write(dir.path().join("bad.pane"), b"PANE\x09").unwrap();
    let bad = dir.path().join("bad.pane");
    let code = pan(&[
        "rank",
        "--query",
        s(&bad),
        "--gallery",
        s(&bad),
        "--out",
        s(&dir.path().join("o")),
    ])
    .status
    .code();
    assert_eq!(code, Some(3));
}

#[test]
fn help_exits_0() {
    let out = pan(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("visualize"));
}
