use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn deephhf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deephhf"))
        .args(args)
        .output()
        .expect("spawn deephhf")
}

fn ok(args: &[&str]) {
    let out = deephhf(args);
    assert!(
        out.status.success(),
        "deephhf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(deephhf(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(deephhf(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(deephhf(&["split", "--labels", "x.jsonl"]).status.code(), Some(2));
}

#[test]
fn pipeline_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = deephhf(&[
        "split",
        "--labels",
        s(&dir.path().join("missing.jsonl")),
        "--out",
        s(&dir.path().join("split.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn end_to_end_on_a_tiny_cohort() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cohort = d.join("cohort");
    let recs = cohort.join("recordings");
    let emr = cohort.join("emr");
    ok(&["synth", "--out", s(&cohort), "--seed", "3", "--n-train", "4", "--n-val", "2", "--n-test", "2"]);
    assert!(cohort.join("manifest.json").exists());
    assert_eq!(fs::read_dir(&recs).unwrap().count() >= 8, true);

    let labels = d.join("labels.jsonl");
    ok(&["label", "--recordings", s(&recs), "--emr", s(&emr), "--out", s(&labels)]);
    assert_eq!(fs::read_to_string(&labels).unwrap().lines().count(), 8);
    let split = d.join("split.jsonl");
    ok(&["split", "--labels", s(&labels), "--val-frac", "0.34", "--out", s(&split)]);
    let m = json(&d.join("split.jsonl.manifest.json"));
    assert_eq!(m["details"]["test"], 2);
    // The synthetic labels keep both classes in every split.
    let split = cohort.join("labels.jsonl");

    let cfg = d.join("tiny.cfg");
    fs::write(
        &cfg,
        "model.enc_filters = 4\nmodel.enc_fc_hidden = 8\nmodel.feat_dim = 6\nmodel.cls_hidden = 5\n\
         model.d_model = 8\nmodel.n_layers = 2\nmodel.ff_dim = 12\nmodel.head_hidden = 6\n\
         max_epochs = 1\nbatch_size = 16\n",
    )
    .unwrap();
    let enc = d.join("enc");
    let full = d.join("full");
    let common = ["--recordings", s(&recs), "--labels", s(&split), "--config", s(&cfg)];
    ok(&[&["train-encoder"][..], &common, &["--out", s(&enc)]].concat());
    let metrics = fs::read_to_string(enc.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let encoder = enc.join("encoder.ckpt");
    ok(&[&["train-head"][..], &common, &["--encoder", s(&encoder), "--lr", "0.001", "--out", s(&full)]].concat());
    assert!(fs::read_to_string(full.join("config.txt")).unwrap().contains("step2.lr = 0.001"));

    let model = full.join("model.ckpt");
    let scores = d.join("scores.csv");
    let enc_scores = d.join("enc_scores.csv");
    let base = ["--recordings", s(&recs), "--labels", s(&split)];
    ok(&[&["score"][..], &base, &["--model", s(&model), "--out", s(&scores)]].concat());
    ok(&[&["score"][..], &base, &["--model", s(&model), "--encoder-only", "--out", s(&enc_scores)]].concat());
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 3);

    let ev = d.join("eval");
    ok(&[
        "evaluate",
        "--scores",
        s(&scores),
        "--labels",
        s(&split),
        "--baseline",
        s(&enc_scores),
        "--bootstrap",
        "20",
        "--out",
        s(&ev),
    ]);
    let r = json(&ev.join("report.json"));
    let a = r["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&a));
    assert!(ev.join("roc.csv").exists() && ev.join("bootstrap.csv").exists());

    let ex = d.join("explain");
    ok(&[&["explain"][..], &base, &["--model", s(&model), "--out", s(&ex)]].concat());
    assert_eq!(fs::read_dir(ex.join("profiles")).unwrap().count(), 2);
    assert!(ex.join("density.csv").exists());

    let pc = d.join("pcphf.csv");
    ok(&[&["pcphf"][..], &base, &["--emr", s(&emr), "--out", s(&pc)]].concat());
    assert_eq!(fs::read_to_string(&pc).unwrap().lines().count(), 3);

    let rep = d.join("report");
    ok(&["report", "--scores", s(&scores), "--labels", s(&split), "--emr", s(&emr), "--split", "all", "--out", s(&rep)]);
    assert!(json(&rep.join("report.json")).is_object());
}
