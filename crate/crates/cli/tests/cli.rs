use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decontam::tracking::{generate_sequence, load_corruption_labels, load_sequence, CorruptionScript};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decontam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCRIPT: &str = "length = 16\nframe_size = 80\ntarget_size = 20\nspeed = 1.0\nocclusion = 6:8:1.0:noise\n";

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path
}

fn synthetic_config(dir: &Path, extra: &str) -> PathBuf {
    let script: String = SCRIPT.lines().map(|l| format!("synth.{l}\n")).collect();
    write_config(dir, &format!("{script}run.out = out\njoint.activation_frame = 4\n{extra}"))
}

fn qp_alpha(o: &Output) -> Vec<f64> {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("alpha = ")).expect("alpha line");
    line["alpha = ".len()..].split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn qp_prints_exact_weights() {
    let o = run(&["qp", "--losses", "0,1", "--priors", "0.5,0.5", "--mu", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = qp_alpha(&o);
    assert!((a[0] - 0.625).abs() < 1e-12 && (a[1] - 0.375).abs() < 1e-12, "{a:?}");
    assert!(stdout(&o).contains("kkt_residual = "));

    let o = run(&["qp", "--losses", "5", "--priors", "1", "--mu", "3"]);
    assert_eq!(qp_alpha(&o), vec![1.0]);

    let o = run(&["qp", "--losses", "3,1,2", "--priors", "0.34,0.33,0.33", "--mu", "1e8"]);
    let a = qp_alpha(&o);
    assert!(a[1] >= 1.0 - 1e-4 && a[0] <= 1e-4 && a[2] <= 1e-4, "{a:?}");
}

#[test]
fn qp_rejects_malformed_input() {
    let o = run(&["qp", "--losses", "0,x", "--priors", "0.5,0.5", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["qp", "--losses", "0,1", "--priors", "0.5", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(&["qp", "--losses", "0,1", "--priors", "0.5,0.5", "--mu", "-1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn track_writes_reports_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), "run.reps = 2\n");
    let o = run(&["track", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for r in ["run_000", "run_001"] {
        for f in ["report.csv", "weights.csv", "metrics.json", "metrics.csv", "config.txt"] {
            assert!(out.join(r).join(f).exists(), "{r}/{f}");
        }
    }
    let aggregate: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(aggregate["runs"].as_array().unwrap().len(), 2);
    for key in ["median_op_50", "mean_op_50", "median_auc", "mean_auc"] {
        assert!(aggregate[key].is_number(), "{key}");
    }
    let seeds: Vec<u64> = aggregate["runs"].as_array().unwrap().iter().map(|m| m["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![0, 1]);
}

#[test]
fn overrides_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), "");
    let o = run(&[
        "track", "--config", cfg.to_str().unwrap(), "--strategy", "fixed", "--gamma", "0.025", "--seed", "9", "--format",
        "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = fs::read_to_string(dir.path().join("out/config.txt")).unwrap();
    for line in ["strategy.kind = fixed", "strategy.gamma = 0.025", "run.seed = 9", "run.format = json"] {
        assert!(echo.lines().any(|l| l == line), "missing `{line}` in\n{echo}");
    }
    assert!(dir.path().join("out/run_000/report.json").exists());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), "run.seed = 4\n");
    assert!(run(&["track", "--config", cfg.to_str().unwrap()]).status.success());
    let echo = dir.path().join("out/run_000/config.txt");
    let again = dir.path().join("again");
    let o = run(&["track", "--config", echo.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    // Everything except the timing column must match.
    let strip = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(dir.path().join("out/run_000/report.csv")), strip(again.join("run_000/report.csv")));
    assert_eq!(
        fs::read(dir.path().join("out/run_000/weights.csv")).unwrap(),
        fs::read(again.join("run_000/weights.csv")).unwrap()
    );
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), "joint.frobnicate = 3\n");
    let o = run(&["track", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("joint.frobnicate"), "{}", stderr(&o));

    let cfg = synthetic_config(dir.path(), "joint.mu = lots\n");
    let o = run(&["track", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("joint.mu"), "{}", stderr(&o));

    let cfg = synthetic_config(dir.path(), "run.sequence = elsewhere\n");
    let o = run(&["track", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "two sources");
}

#[test]
fn missing_sequence_directory_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.sequence = nowhere\nrun.out = out\n");
    let o = run(&["track", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn synth_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.cfg");
    fs::write(&script, SCRIPT).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["synth", "--config", script.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let expected = generate_sequence(&CorruptionScript::from_file(&script).unwrap(), 5).unwrap();
    let loaded = load_sequence(&a).unwrap();
    assert_eq!(loaded.frames, expected.frames);
    assert_eq!(loaded.ground_truth, expected.ground_truth);
    let labels = load_corruption_labels(&a).unwrap().unwrap();
    assert_eq!(labels.len(), expected.len());
    assert_eq!(Some(labels), expected.corruption_labels);
    for name in ["groundtruth_rect.txt", "corruption_labels.txt", "img/0001.png", "img/0016.png"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    // The written directory is a valid tracking source.
    let cfg = write_config(dir.path(), "run.sequence = a\nrun.out = tracked\n");
    let o = run(&["track", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("tracked/run_000/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 17);
}

#[test]
fn synth_bad_script_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.cfg");
    fs::write(&script, "length = 10\nwobble = 1\n").unwrap();
    let o = run(&["synth", "--config", script.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wobble"));
}

fn sweep_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn sweep_rows_are_paired() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), "run.seed = 3\n");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--values", "0.5,5,50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = sweep_rows(&o);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[0] == "joint.mu" && r[2] == "3"));
    assert_eq!(fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap(), stdout(&o));
}

#[test]
fn tiny_mu_sweep_matches_fixed_decay() {
    let dir = tempfile::tempdir().unwrap();
    // Matched schedule: window covers the whole sequence and gamma equals eta.
    let cfg = synthetic_config(dir.path(), "joint.window = 16\njoint.eta = 0.035\nrun.reps = 2\n");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--values", "1e-8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let joint = &sweep_rows(&o)[0];
    let fixed_out = dir.path().join("fixed");
    let o = run(&[
        "track", "--config", cfg.to_str().unwrap(), "--strategy", "fixed", "--gamma", "0.035", "--out",
        fixed_out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let aggregate: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixed_out.join("metrics.json")).unwrap()).unwrap();
    let joint_op: f64 = joint[5].parse().unwrap();
    assert_eq!(joint_op, aggregate["mean_op_50"].as_f64().unwrap());
}
