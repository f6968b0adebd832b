use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bivo::dataset::synthetic::generate_sequence;
use bivo::dataset::tum::write_sequence;

const SMALL: &str = "rich:frames=4,width=40,height=30,seed=2";

fn bivo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bivo"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn successful_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (traj, report) = (dir.path().join("t.txt"), dir.path().join("r.csv"));
    let out = bivo(&[
        "--synthetic",
        SMALL,
        "--interval",
        "0.05",
        "--out-trajectory",
        path(&traj),
        "--out-report",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(&traj)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        4
    );
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("sequence,method,lambda_mode,rmse_drift_mps"));
    assert!(text.contains("synthetic-rich-seed2,weighted,complexity,"));
}

#[test]
fn help_succeeds() {
    assert_eq!(code(&bivo(&["--help"])), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        vec![],
        vec!["--synthetic", SMALL, "--input", "somewhere"],
        vec!["--synthetic", SMALL, "--method", "newton"],
        vec!["--synthetic", SMALL, "--lambda-mode", "median"],
        vec!["--synthetic", "marble"],
        vec!["--synthetic", SMALL, "--intrinsics", "1,2,3"],
        vec!["--synthetic", SMALL, "--eps-min", "5", "--eps-max", "1"],
        vec!["--synthetic", SMALL, "--no-such-flag"],
    ] {
        assert_eq!(code(&bivo(&args)), 1, "{args:?}");
    }
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bivo(&["--input", path(&dir.path().join("missing"))])), 2);
    // Shorter than the drift interval.
    assert_eq!(code(&bivo(&["--synthetic", SMALL])), 2);

    let seq = generate_sequence(&SMALL.parse().unwrap()).unwrap();
    write_sequence(dir.path(), &seq.frames, &[]).unwrap();
    assert_eq!(code(&bivo(&["--input", path(dir.path())])), 0);
    let report = dir.path().join("r.csv");
    assert_eq!(
        code(&bivo(&[
            "--input",
            path(dir.path()),
            "--out-report",
            path(&report)
        ])),
        2
    );
    assert!(!report.exists());
}

#[test]
fn numerical_failures_exit_with_three() {
    let out = bivo(&[
        "--synthetic",
        "rich:frames=3,width=12,height=12",
        "--interval",
        "0.05",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn partial_outputs_are_removed() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.txt");
    let report = dir.path().join("no-such-dir").join("r.csv");
    let out = bivo(&[
        "--synthetic",
        SMALL,
        "--interval",
        "0.05",
        "--out-trajectory",
        path(&traj),
        "--out-report",
        path(&report),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!traj.exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let report = dir.path().join("r.csv");
    fs::write(
        &cfg,
        format!(
            "# experiment\nsynthetic = {SMALL}\nmethod = bounded\ninterval = 0.05\nout_report = {}\n",
            path(&report)
        ),
    )
    .unwrap();
    assert_eq!(code(&bivo(&["--config", path(&cfg)])), 0);
    assert!(fs::read_to_string(&report).unwrap().contains(",bounded,none,"));
    assert_eq!(code(&bivo(&["--config", path(&cfg), "--method", "tykkala"])), 0);
    assert!(fs::read_to_string(&report).unwrap().contains(",tykkala,tykkala,"));
    assert_eq!(code(&bivo(&["--config", path(&cfg), "--lambda", "2"])), 0);
    assert!(fs::read_to_string(&report).unwrap().contains(",bounded,none,"));

    fs::write(&cfg, "synthetic = rich\nspeed = 3\n").unwrap();
    assert_eq!(code(&bivo(&["--config", path(&cfg)])), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let files = |tag: &str| {
        let (t, r) = (
            dir.path().join(format!("{tag}.txt")),
            dir.path().join(format!("{tag}.csv")),
        );
        let out = bivo(&[
            "--synthetic",
            SMALL,
            "--interval",
            "0.05",
            "--method",
            "tykkala",
            "--seed",
            "9",
            "--out-trajectory",
            path(&t),
            "--out-report",
            path(&r),
        ]);
        assert_eq!(code(&out), 0);
        (fs::read(t).unwrap(), fs::read(r).unwrap())
    };
    assert_eq!(files("a"), files("b"));
}
