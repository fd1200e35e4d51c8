use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use countlab::datagen::GestureConvention;
use countlab::training::{Execution, Pretraining};
use countlab_cli::commands::REPORT_DIR;
use countlab_cli::output::ResultsFile;
use countlab_cli::{
    cmd_build_gestures, cmd_compare, cmd_report, cmd_run, ExperimentConfig, Metric,
};
use tempfile::TempDir;

fn tiny(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        study: 2,
        pretraining: Pretraining::Both,
        convention: GestureConvention::GoToBase,
        repetitions: 2,
        test_sets: 2,
        sub_epochs: 15,
        output_dir: dir.join("results"),
        gesture_table: dir.join("table.json"),
        ..Default::default()
    };
    cfg.stage1a.epochs = Some(10);
    cfg.stage1b.epochs = Some(10);
    cfg
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn countlab(args: &[&str], env_dir: Option<&Path>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_countlab"));
    cmd.args(args).env_remove("COUNTLAB_OUTPUT_DIR");
    if let Some(d) = env_dir {
        cmd.env("COUNTLAB_OUTPUT_DIR", d);
    }
    cmd.output().unwrap()
}

#[test]
fn gesture_table_rebuild_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(tmp.path());
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    let table = cmd_build_gestures(&cfg, &a).unwrap();
    cmd_build_gestures(&cfg, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(table.len(), 21);
}

#[test]
fn degenerate_arm_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.arm.forearm = 0.0;
    let err = cmd_build_gestures(&cfg, &tmp.path().join("t.json")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!tmp.path().join("t.json").exists());
}

#[test]
fn run_without_table_points_at_build_gestures() {
    let tmp = TempDir::new().unwrap();
    let err = cmd_run(&tiny(tmp.path()), Execution::Serial).err().unwrap();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("build-gestures"));
    assert!(!tmp.path().join("results").exists());
}

#[test]
fn counting_only_run_needs_no_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        study: 1,
        condition: 1,
        pretraining: Pretraining::None,
        ..tiny(tmp.path())
    };
    let run = cmd_run(&cfg, Execution::Serial).unwrap();
    let results = ResultsFile::load(&run.dir).unwrap();
    assert_eq!(results.rows.len(), 2);
    assert!(results.rows.iter().all(|r| r.gesture.is_none()));
    assert!(run.dir.join("traces/rep00-main-counting.tsv").exists());
    assert!(!run.dir.join("traces/rep00-main-gesture.tsv").exists());
}

#[test]
fn run_writes_a_complete_directory_deterministically() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny(tmp.path());
    cmd_build_gestures(&cfg, &cfg.gesture_table).unwrap();
    let run = cmd_run(&cfg, Execution::Serial).unwrap();
    assert_eq!(run.dir, cfg.output_dir.join("study2-NL-B-both"));
    for f in [
        "results.tsv",
        "summary.tsv",
        "report.json",
        "config.toml",
        "traces/rep00-main-counting.tsv",
        "traces/rep01-main-gesture.tsv",
        "traces/rep00-stage1a-total.tsv",
        "traces/rep01-stage1b-total.tsv",
        "checkpoints/rep00-main.json",
        "checkpoints/rep01-stage1b.json",
    ] {
        assert!(run.dir.join(f).exists(), "{f}");
    }
    let results = ResultsFile::load(&run.dir).unwrap();
    assert_eq!(results.get("pretraining"), Some("both"));
    for r in &results.rows {
        for v in [r.counting, r.gesture, r.stage1b_gesture]
            .into_iter()
            .flatten()
        {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(r.stage1a_recites.is_some());
    }
    let saved = ExperimentConfig::load(&run.dir.join("config.toml")).unwrap();
    assert_eq!(saved, cfg);

    let first = read_tree(&run.dir);
    cmd_run(&cfg, Execution::Parallel).unwrap();
    assert_eq!(read_tree(&run.dir), first);
    let leftovers: Vec<_> = fs::read_dir(&cfg.output_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(leftovers.len(), 1, "{leftovers:?}");
}

#[test]
fn compare_and_report() {
    let tmp = TempDir::new().unwrap();
    let base = tiny(tmp.path());
    cmd_build_gestures(&base, &base.gesture_table).unwrap();
    let mut dirs = Vec::new();
    for p in [Pretraining::None, Pretraining::Stage1b, Pretraining::Both] {
        let cfg = ExperimentConfig {
            pretraining: p,
            repetitions: 3,
            ..base.clone()
        };
        dirs.push(cmd_run(&cfg, Execution::Parallel).unwrap().dir);
    }
    let out = tmp.path().join("cmp.tsv");

    let same = cmd_compare(&[dirs[0].clone(), dirs[0].clone()], Metric::Counting, &out).unwrap();
    assert_eq!(same.len(), 1);
    assert_eq!(same[0].result.f, 0.0);
    assert_eq!(same[0].result.p, 1.0);

    let three = cmd_compare(&dirs, Metric::Gesture, &out).unwrap();
    assert_eq!(three.len(), 4);
    let omnibus = &three[3].result;
    assert_eq!((omnibus.df_between, omnibus.df_within), (2, 6));
    assert!((0.0..=1.0).contains(&omnibus.p));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("# countlab-compare v1"));

    let err = cmd_compare(&dirs[..2], Metric::Stage1bGesture, &out).unwrap_err();
    assert_eq!(err.exit_code(), 1);

    let root = &base.output_dir;
    let first = cmd_report(root).unwrap();
    assert_eq!(first.rows, 3);
    assert_eq!(first.curves.len(), 3);
    let snapshot = read_tree(&root.join(REPORT_DIR));
    cmd_report(root).unwrap();
    assert_eq!(read_tree(&root.join(REPORT_DIR)), snapshot);
    let table = fs::read_to_string(&first.table).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.contains("study2-NL-B-stage1b"));
}

#[test]
fn report_on_empty_directory_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let err = cmd_report(tmp.path()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn binary_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();

    assert!(countlab(&["--help"], None).status.success());
    assert_eq!(countlab(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(
        countlab(&["run", "--condition", "9"], None).status.code(),
        Some(1)
    );
    assert_eq!(
        countlab(&["report"], Some(tmp.path())).status.code(),
        Some(1)
    );

    let missing = countlab(
        &[
            "run",
            "--study",
            "2",
            "--gesture-table",
            &format!("{dir}/nope.json"),
            "--output-dir",
            dir,
        ],
        None,
    );
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("build-gestures"));

    let table = format!("{dir}/table.json");
    let built = countlab(&["build-gestures", "--out", &table], None);
    assert!(built.status.success(), "{built:?}");
    assert!(Path::new(&table).exists());

    let ok = countlab(
        &[
            "run",
            "--condition",
            "5",
            "--repetitions",
            "1",
            "--sub-epochs",
            "5",
            "--test-sets",
            "1",
            "--gesture-table",
            &table,
            "--no-checkpoints",
        ],
        Some(tmp.path()),
    );
    assert!(ok.status.success(), "{ok:?}");
    let run_dir = tmp.path().join("study1-cond5-S");
    assert!(run_dir.join("results.tsv").exists());
    assert!(!run_dir.join("checkpoints").exists());

    let garbage = tmp.path().join("garbage.tsv");
    fs::write(&garbage, "not results\n").unwrap();
    let bad = countlab(
        &[
            "compare",
            garbage.to_str().unwrap(),
            run_dir.to_str().unwrap(),
        ],
        Some(tmp.path()),
    );
    assert_eq!(bad.status.code(), Some(1));
}
