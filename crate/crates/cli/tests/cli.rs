use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sigverify::features::FeatureSequence;

fn sigverify(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigverify"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path) {
    let o = sigverify(&["synth", "--out", "syn", "--clients", "4", "--seed", "5"], dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_dtw_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let args = [
        "eval-dtw", "--data", "syn", "--level", "2", "--window", "11", "--trials", "3", "--seed", "7",
    ];
    let (a, b) = (sigverify(&args, dir.path()), sigverify(&args, dir.path()));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(report["trial_eers"].as_array().unwrap().len(), 3);
    assert_eq!(report["config"]["experiment"]["features"]["window_half"], 5);
}

#[test]
fn usage_and_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    for args in [
        vec!["eval-dtw", "--data", "syn", "--seed", "1", "--trials", "0"],
        vec!["eval-dtw", "--data", "syn", "--seed", "1", "--variant", "fancy"],
        vec!["eval-dtw", "--data", "syn"],
        vec!["eval-dtw", "--data", "syn", "--seed", "1", "--window", "10"],
        vec!["extract", "--input", "syn/001_g001.csv", "--out", "f", "--level", "9"],
    ] {
        assert_eq!(sigverify(&args, dir.path()).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = sigverify(
        &["extract", "--input", "syn/001_g001.csv", "--out", "blocker/feats"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let o = sigverify(&["eval-dtw", "--data", "missing", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn extract_writes_containers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("USER1_1.TXT"),
        "4\n0 0 0 1\n1 0 10 1\n1 1 20 1\n3 2 30 1\n",
    )
    .unwrap();
    let o = sigverify(
        &[
            "extract",
            "--input",
            "USER1_1.TXT",
            "--out",
            "feats",
            "--window",
            "9",
            "--level",
            "2",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("4 x 6"));
    let bytes = fs::read(dir.path().join("feats/USER1_1.lnps")).unwrap();
    let seq = FeatureSequence::read_from(&bytes[..]).unwrap();
    assert_eq!((seq.len(), seq.dim()), (4, 6));
}

#[test]
fn verify_prints_decision() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let base = [
        "verify",
        "--probe",
        "syn/001_g001.csv",
        "--template",
        "syn/001_g001.csv",
        "--template",
        "syn/001_g002.csv",
        "--template",
        "syn/001_g003.csv",
    ];
    let accept = sigverify(&[&base[..], &["--threshold", "1000"]].concat(), dir.path());
    assert!(stdout(&accept).starts_with("ACCEPT score="), "{}", stdout(&accept));
    let reject = sigverify(&[&base[..], &["--threshold", "0"]].concat(), dir.path());
    assert!(stdout(&reject).starts_with("REJECT score="));
    assert!(reject.status.success());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    fs::write(
        dir.path().join("run.conf"),
        "[eval-dtw]\ndata = syn\nseed = 3\ntrials = 1\nlevel = 3\n",
    )
    .unwrap();
    let o = sigverify(&["--config", "run.conf", "eval-dtw", "--level", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["seed"], 3);
    assert_eq!(report["config"]["experiment"]["features"]["level"], 1);

    fs::write(dir.path().join("bad.conf"), "[eval-dtw]\ncolour = red\n").unwrap();
    let o = sigverify(
        &["--config", "bad.conf", "eval-dtw", "--data", "syn", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trained_model_separates_synthetic_forgeries() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let common = [
        "--data",
        "syn",
        "--seed",
        "4",
        "--epochs",
        "30",
        "--hidden1",
        "16",
        "--hidden2",
        "16",
        "--embedding",
        "8",
        "--templates",
        "6",
    ];
    let o = sigverify(&[&["train", "--out", "m.grum"][..], &common].concat(), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = sigverify(
        &[&["eval-rnn", "--model", "m.grum", "--trials", "1"][..], &common].concat(),
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["mean_eer"].as_f64().unwrap() <= 0.05, "{report}");

    let o = sigverify(
        &[
            "verify",
            "--probe",
            "syn/001_g011.csv",
            "--template",
            "syn/001_g001.csv",
            "--template",
            "syn/001_g002.csv",
            "--model",
            "m.grum",
            "--level",
            "3",
            "--threshold",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}
