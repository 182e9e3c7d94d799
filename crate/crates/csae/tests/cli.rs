//! Command-line contract: exit codes, outputs and the manifest.

use std::path::Path;
use std::process::{Command, Output};

fn csae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csae"))
        .args(args)
        .output()
        .expect("run csae")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// One-epoch schedules on a four-subject cohort.
fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    let text = "data.subjects = 4\ndesk.ae_train_step = 16\ndesk.clf_train_step = 8\ndesk.eval_step = 8\n\
                desk.max_folds = 1\ncsae.train.max_epochs = 1\nclassifier.train.max_epochs = 1\n\
                finetune.train.max_epochs = 1\n";
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&csae(&[])), 1);
    assert_eq!(code(&csae(&["--classes", "7", "loso"])), 1);
    assert_eq!(code(&csae(&["--data", "x", "--synthetic", "loso"])), 1);
    assert_eq!(code(&csae(&["--calib-fraction", "1.5", "--synthetic", "finetune"])), 1);
    assert_eq!(code(&csae(&["--classes", "6", "--synthetic", "expand"])), 1);
    assert_eq!(code(&csae(&["--help"])), 0);
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "csae.no_such_key = 3\n").unwrap();
    let out = csae(&["--synthetic", "--config", path.to_str().unwrap(), "loso"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&csae(&["--data", dir.path().join("missing").to_str().unwrap(), "loso"])),
        2
    );
    std::fs::write(dir.path().join("s1.csv"), "subject,movement\n1,0\n").unwrap();
    let out = csae(&["--data", dir.path().to_str().unwrap(), "loso"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("s1.csv"));
}

#[test]
fn divergent_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("diverge.toml");
    std::fs::write(
        &cfg,
        format!(
            "{}csae.train.learning_rate = 1e300\n",
            std::fs::read_to_string(tiny_config(dir.path())).unwrap()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = csae(&[
        "--synthetic",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "train-ae",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gradcheck_passes() {
    let out = csae(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn recordings_round_trip_through_the_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());

    assert_eq!(code(&csae(&["--config", &cfg, "--out", data_s, "gen-synthetic"])), 0);
    let files: Vec<_> = std::fs::read_dir(&data).unwrap().filter_map(|e| e.ok()).collect();
    assert_eq!(
        files
            .iter()
            .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
            .count(),
        4
    );

    let common = ["--data", data_s, "--config", &cfg, "--out", out_s];
    for cmd in ["train-ae", "train-clf", "finetune"] {
        let r = csae(&[&common[..], &[cmd]].concat());
        assert_eq!(code(&r), 0, "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
    }
    for f in [
        "ae.ckpt",
        "clf.ckpt",
        "ae_train_log.csv",
        "clf_train_log.csv",
        "table1.csv",
        "table2.csv",
        "fold01.ckpt",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"finetune\""));
    assert!(manifest.contains("table2.csv"));
    let echoed = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("desk.max_folds = 1"));

    let report = csae(&["--out", out_s, "report"]);
    assert_eq!(code(&report), 0);
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("== table2.csv") && text.contains("f1_original (%)"));
}

#[test]
fn bad_checkpoints_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("broken.ckpt");
    std::fs::write(&ck, b"CSAE-CHECKPOINT\n5\nabc").unwrap();
    let out = csae(&[
        "--synthetic",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "train-clf",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}
