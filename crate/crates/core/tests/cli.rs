use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use parvi::runner::{
    load_config, snapshot_file_name, METRICS_FILE, RESOLVED_CONFIG_FILE, SUMMARY_FILE,
};

const SMALL_GAUSSIAN: &str = "\
estimator = gfsd
dynamics = wag
step_size = 0.05
bandwidth = median
target = gaussian
target_mean = 1, -1
n_particles = 12
n_iterations = 10
snapshot_stride = 5
seed = 4
init_std = 0.5
output_dir = out
";

fn parvi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parvi"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

#[test]
fn run_writes_metrics_snapshots_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.conf"), SMALL_GAUSSIAN).unwrap();
    let out = parvi(&["run", "a.conf"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let od = dir.path().join("out");
    let metrics = fs::read_to_string(od.join(METRICS_FILE)).unwrap();
    let records: Vec<serde_json::Value> = metrics
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 11);
    assert_eq!(records[0]["iter"], 0);
    assert_eq!(records[10]["iter"], 10);
    assert!(records[10]["w2"].as_f64().unwrap() < records[0]["w2"].as_f64().unwrap());
    assert!(records[0]["wall_ms"].is_null());

    for k in [0, 5, 10] {
        let snap = fs::read_to_string(od.join(snapshot_file_name(k))).unwrap();
        assert_eq!(snap.lines().count(), 12);
        assert!(snap.lines().all(|l| l.split(',').count() == 2));
    }
    assert!(!od.join(snapshot_file_name(3)).exists());

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(od.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["status"], "completed");
    assert_eq!(summary["iterations"], 10);

    // The resolved config reproduces the same run.
    let resolved = load_config(&od.join(RESOLVED_CONFIG_FILE)).unwrap();
    let original = load_config(&dir.path().join("a.conf")).unwrap();
    assert_eq!(resolved, original);
}

#[test]
fn validate_reports_every_problem_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "dynamics = wag\nwag_alpha = 2.5\nstep_size = -1\ncolour = blue\n";
    fs::write(dir.path().join("bad.conf"), text).unwrap();
    let out = parvi(&["validate", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha"), "{err}");
    assert!(err.contains("step"), "{err}");
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn validate_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.conf"), SMALL_GAUSSIAN).unwrap();
    let out = parvi(&["validate", "a.conf"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("wag_alpha = 3.9"));
    assert!(text.contains("n_particles = 12"));
}

#[test]
fn blow_up_exits_with_code_three_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    // A huge step on a sharply curved target overshoots without bound.
    let text = SMALL_GAUSSIAN
        .replace("step_size = 0.05", "step_size = 50")
        .replace("dynamics = wag", "dynamics = wgd")
        .replace("n_iterations = 10", "n_iterations = 2000")
        .replace(
            "target_mean = 1, -1",
            "target_mean = 1, -1\ntarget_var = 0.01",
        );
    fs::write(dir.path().join("boom.conf"), text).unwrap();
    let out = parvi(&["run", "boom.conf"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let od = dir.path().join("out");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(od.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["status"], "blowup");
    let metrics = fs::read_to_string(od.join(METRICS_FILE)).unwrap();
    assert!(metrics
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn sweep_runs_all_matching_configs() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        let text = SMALL_GAUSSIAN
            .replace("seed = 4", &format!("seed = {seed}"))
            .replace("output_dir = out", &format!("output_dir = out{seed}"));
        fs::write(dir.path().join(format!("s{seed}.conf")), text).unwrap();
    }
    let out = parvi(&["sweep", "s*.conf"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for seed in 0..3 {
        assert!(dir
            .path()
            .join(format!("out{seed}"))
            .join(SUMMARY_FILE)
            .is_file());
    }
    let a = fs::read(dir.path().join("out0").join(METRICS_FILE)).unwrap();
    let b = fs::read(dir.path().join("out1").join(METRICS_FILE)).unwrap();
    assert_ne!(a, b);

    let none = parvi(&["sweep", "nothing*.conf"], dir.path());
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn csv_dataset_runs_relative_to_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    let mut csv = String::from("f1,f2,label\n");
    for i in 0..40 {
        let x = i as f64 / 10.0 - 2.0;
        let y = (i * 7 % 11) as f64 / 5.0 - 1.0;
        let label = u8::from(x + 0.5 * y > 0.0);
        csv += &format!("{x},{y},{label}\n");
    }
    fs::write(dir.path().join("data/toy.csv"), csv).unwrap();
    fs::create_dir(dir.path().join("cfg")).unwrap();
    let text = "\
estimator = gfsf
dynamics = wnes
step_size = 1e-3
wnes_mu = 10
target = blr
dataset = ../data/toy.csv
dataset_header = true
batch_size = 10
n_particles = 8
n_iterations = 20
init = prior
output_dir = ../runs/blr
";
    fs::write(dir.path().join("cfg/blr.conf"), text).unwrap();
    let out = parvi(&["run", "cfg/blr.conf"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = fs::read_to_string(dir.path().join("runs/blr").join(METRICS_FILE)).unwrap();
    let last: serde_json::Value = serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
    let acc = last["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}
