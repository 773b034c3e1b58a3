use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wkd::synth::{planted_corpus, SynthConfig};

fn wkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wkd")).args(args).output().unwrap()
}

fn wkd_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wkd"))
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(&o),
        stderr(&o)
    );
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_tsv(path: &Path, docs: usize, seed: u64) {
    let planted = planted_corpus(&SynthConfig {
        docs,
        topics: 3,
        vocab: 60,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut text = String::new();
    for (i, d) in planted.corpus.docs.iter().enumerate() {
        let part = if i % 10 == 9 { "test" } else { "train" };
        text.push_str(&format!(
            "{}\t{part}\t{}\n",
            d.tokens.join(" "),
            d.label.clone().unwrap_or_default()
        ));
    }
    fs::write(path, text).unwrap();
}

/// Corpus prepared with synthetic 12/6-dim embeddings.
fn prepared(root: &Path) -> PathBuf {
    let tsv = root.join("corpus.tsv");
    write_tsv(&tsv, 80, 0);
    let data = root.join("data");
    ok(wkd(&[
        "prepare",
        "--dataset",
        p(&tsv),
        "--vocab-size",
        "60",
        "--synth-embeddings",
        "12,6",
        "--out",
        p(&data),
    ]));
    data
}

fn train_teacher(data: &Path, out: &Path) {
    ok(wkd(&[
        "train-teacher",
        "--dataset",
        p(data),
        "--k",
        "3",
        "--depth",
        "1",
        "--epochs",
        "3",
        "--batch-size",
        "16",
        "--out",
        p(out),
    ]));
}

#[test]
fn prepare_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = prepared(dir.path());
    let b = dir.path().join("again");
    ok(wkd(&[
        "prepare",
        "--dataset",
        p(&dir.path().join("corpus.tsv")),
        "--vocab-size",
        "60",
        "--synth-embeddings",
        "12,6",
        "--out",
        p(&b),
    ]));
    for f in ["vocab.txt", "bow.tns", "corpus.tsv", "teacher.emb", "student.emb"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = wkd(&[
        "prepare",
        "--dataset",
        "/nonexistent/corpus.tsv",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = wkd(&["train-teacher", "--k", "3", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--dataset"));
    let o = wkd(&["eval", "--config", "/nonexistent.ini"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("bad.tsv");
    fs::write(&tsv, "just one column\n").unwrap();
    let o = wkd(&["prepare", "--dataset", p(&tsv), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn end_to_end_train_distill_eval_compare() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let teacher = dir.path().join("teacher");
    train_teacher(&data, &teacher);
    assert!(teacher.join("manifest.txt").exists());

    let skd = dir.path().join("skd");
    let o = ok(wkd(&[
        "distill",
        "--dataset",
        p(&data),
        "--teacher",
        p(&teacher),
        "--k",
        "3",
        "--runs",
        "2",
        "--epochs",
        "3",
        "--batch-size",
        "16",
        "--alpha",
        "0.5",
        "--temperature",
        "2",
        "--out",
        p(&skd),
    ]));
    assert!(stdout(&o).contains("SKD"));
    let report = fs::read_to_string(skd.join("run_report.csv")).unwrap();
    assert!(report.starts_with("model,K,run,seed,npmi,cv\nT,3,"));
    assert!(report.contains("SKD,3,median"));
    for f in [
        "run-0/manifest.txt",
        "run-1/coherence.csv",
        "params.txt",
        "teacher_coherence.csv",
        "settings.ini",
    ] {
        assert!(skd.join(f).exists(), "{f}");
    }

    let ablated = dir.path().join("ablated");
    ok(wkd(&[
        "distill",
        "--dataset",
        p(&data),
        "--teacher",
        p(&teacher),
        "--runs",
        "1",
        "--epochs",
        "2",
        "--batch-size",
        "16",
        "--no-ce",
        "--out",
        p(&ablated),
    ]));
    assert!(fs::read_to_string(ablated.join("run_report.csv"))
        .unwrap()
        .contains("SKD-2w"));

    // Evaluation is deterministic.
    let eval = |out: &Path| {
        ok(wkd(&[
            "eval",
            "--dataset",
            p(&data),
            "--checkpoint",
            p(&skd.join("run-0")),
            "--out",
            p(out),
        ]));
        fs::read(out).unwrap()
    };
    let (e1, e2) = (dir.path().join("e1.csv"), dir.path().join("e2.csv"));
    assert_eq!(eval(&e1), eval(&e2));
    let piped = ok(wkd(&[
        "eval",
        "--dataset",
        p(&data),
        "--checkpoint",
        p(&skd.join("run-0")),
    ]));
    assert_eq!(stdout(&piped).as_bytes(), fs::read(&e1).unwrap().as_slice());

    // Identical reports give zero deltas.
    let t_csv = skd.join("teacher_coherence.csv");
    let o = ok(wkd(&["compare", p(&t_csv), p(&t_csv)]));
    let table = stdout(&o);
    assert!(table.contains(",0.000000,0.000000"), "{table}");
    let o = ok(wkd(&[
        "compare",
        "--teacher",
        p(&teacher),
        "--checkpoint",
        p(&skd.join("run-0")),
        p(&t_csv),
        p(&e1),
    ]));
    assert!(stdout(&o).contains("reduction"));
}

#[test]
fn compare_needs_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("r.csv");
    fs::write(
        &f,
        "model,K,seed,topic_id,npmi,cv\nS,3,0,0,0.1,0.5\nS,3,0,mean,0.1,0.5\n",
    )
    .unwrap();
    let o = wkd(&["compare", p(&f)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("need ≥2 reports"));
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let teacher = dir.path().join("teacher");
    train_teacher(&data, &teacher);
    let other_tsv = dir.path().join("other.tsv");
    write_tsv(&other_tsv, 80, 5);
    let other = dir.path().join("other");
    ok(wkd(&[
        "prepare",
        "--dataset",
        p(&other_tsv),
        "--vocab-size",
        "40",
        "--synth-embeddings",
        "12,6",
        "--out",
        p(&other),
    ]));
    let o = wkd(&["eval", "--dataset", p(&other), "--checkpoint", p(&teacher)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vocabulary mismatch"), "{}", stderr(&o));
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let ini = dir.path().join("exp.ini");
    fs::write(
        &ini,
        format!(
            "[train]\ndataset = {}\nk = 3\ndepth = 1\nepochs = 2\nbatch-size = 16\n",
            p(&data)
        ),
    )
    .unwrap();
    let out = dir.path().join("t");
    ok(wkd(&[
        "train-teacher",
        "--config",
        p(&ini),
        "--epochs",
        "1",
        "--out",
        p(&out),
    ]));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let saved = fs::read_to_string(out.join("settings.ini")).unwrap();
    assert!(saved.contains("epochs = 1") && saved.contains("batch_size = 16"));
}

#[test]
fn params_table() {
    let o = ok(wkd(&["params"]));
    let table = stdout(&o);
    assert!(table.starts_with("dataset,K,H,teacher_params,student_params,teacher_mb,student_mb,reduction_pct\n"));
    assert_eq!(table.lines().count(), 8);
    for line in table.lines().skip(1) {
        let pct: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((35.0..=60.0).contains(&pct), "{line}");
    }
    let o = ok(wkd(&["params", "--preset", "20ng", "--k", "20"]));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn thread_cap_is_validated() {
    let o = wkd_env(&["params"], "WKD_THREADS", "0");
    assert_eq!(o.status.code(), Some(2));
    ok(wkd_env(&["params"], "WKD_THREADS", "1"));
}

#[test]
fn bad_flag_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let teacher = dir.path().join("teacher");
    train_teacher(&data, &teacher);
    for extra in [["--alpha", "1.5"], ["--temperature", "0"], ["--k", "7"]] {
        let mut args = vec![
            "distill",
            "--dataset",
            p(&data),
            "--teacher",
            p(&teacher),
            "--runs",
            "1",
            "--epochs",
            "1",
            "--out",
        ];
        let out = dir.path().join("o");
        args.push(p(&out));
        args.extend(extra);
        let o = wkd(&args);
        assert_eq!(o.status.code(), Some(2), "{extra:?}: {}", stderr(&o));
    }
    let o = wkd(&[
        "distill",
        "--no-2w",
        "--no-ce",
        "--dataset",
        p(&data),
        "--teacher",
        p(&teacher),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
