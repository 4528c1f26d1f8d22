mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cptag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cptag")).args(args).output().expect("spawn cptag")
}

fn ok(args: &[&str]) -> String {
    let out = cptag(args);
    assert!(
        out.status.success(),
        "cptag {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, "The/AT dog/NN ./.\nIt's/PPS+BEZ here/RB-HL ./.\n").unwrap();
    let out = ok(&["ingest", "--corpus", s(&corpus)]);
    assert!(out.contains("sentences\t2"));
    assert!(out.contains("tokens\t6"));
    assert!(out.contains("labels\t5"));
}

#[test]
fn ingest_rejects_malformed_token() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, "The/AT dog ./.\n").unwrap();
    let out = cptag(&["ingest", "--corpus", s(&corpus)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("dog"), "{err}");
}

#[test]
fn score_calibrate_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    fs::write(p("c.txt"), common::toy_corpus(300, 3)).unwrap();

    let out = ok(&["split", "--corpus", s(&p("c.txt")), "--seed", "9", "--out", s(&p("split.txt"))]);
    assert!(out.contains("train 240 / cal 30 / test 30"), "{out}");

    for task in ["pos", "mlm"] {
        for part in ["cal", "test"] {
            ok(&[
                "score", "--corpus", s(&p("c.txt")), "--split", s(&p("split.txt")), "--task", task,
                "--part", part, "--out", s(&p(&format!("{task}-{part}.cpsf"))),
            ]);
        }
        assert!(p(&format!("{task}-cal.cpsf.vocab")).exists());
        ok(&["calibrate", "--scores", s(&p(&format!("{task}-cal.cpsf"))), "--out", s(&p(&format!("{task}.cal")))]);
        let eval_dir = p(&format!("{task}-eval"));
        let out = ok(&[
            "evaluate", "--calibration", s(&p(&format!("{task}.cal"))), "--scores",
            s(&p(&format!("{task}-test.cpsf"))), "--epsilons", "0.1,0.25", "--out-dir", s(&eval_dir),
        ]);
        assert!(out.starts_with("epsilon,n_test,ca"), "{out}");
        let sets = fs::read_to_string(eval_dir.join("prediction_sets.tsv")).unwrap();
        assert!(sets.lines().count() >= 2);
        assert!(sets.lines().all(|l| l.split('\t').count() == 3));
        assert_eq!(fs::read_to_string(eval_dir.join("metrics.csv")).unwrap().lines().count(), 3);
    }
}

#[test]
fn experiment_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, common::toy_corpus(200, 4)).unwrap();
    let out_dir = dir.path().join("out");
    let config = dir.path().join("run.conf");
    fs::write(&config, format!("corpus = {}\ntask = pos\nrepetitions = 2\n", s(&corpus))).unwrap();
    let out = ok(&["experiment", "--config", s(&config), "--epsilons", "0.1", "--output-dir", s(&out_dir)]);
    for f in ["metrics.csv", "coverage_curve.csv", "nonconformity_hist.csv", "set_size_hist.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing; stdout: {out}");
    }
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3);
}

#[test]
fn experiment_rejects_bad_config() {
    let out = cptag(&["experiment", "--task", "pos", "--scorer", "ngram", "--corpus", "x.txt"]);
    assert!(!out.status.success());
    let out = cptag(&["experiment", "--task", "pos", "--train-frac", "0.9", "--corpus", "x.txt"]);
    assert!(!out.status.success());
}

#[test]
fn synthetic_prints_mean_rows() {
    let out = ok(&["synthetic", "--n-cal", "200", "--n-test", "400", "--seeds", "2", "--epsilons", "0.1"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "seed,epsilon,coverage,std_error,n_eps,op");
    assert_eq!(lines.len(), 1 + 2 + 1);
    assert!(lines[3].starts_with("mean,0.1,"));
}

#[test]
fn fill_predicts_each_gap() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, common::toy_corpus(600, 5)).unwrap();
    let out = ok(&["fill", "--corpus", s(&corpus), "--text", "to a community <UNK> .", "--epsilon", "0.25"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1, "{out}");
    let fields: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(fields[0], "3");
    assert!(fields[2].split(',').any(|w| w == "meeting"), "{out}");

    let out = ok(&["fill", "--corpus", s(&corpus), "--text", "the <UNK> <UNK> .", "--epsilon", "0.25"]);
    assert_eq!(out.lines().count(), 2);
}
