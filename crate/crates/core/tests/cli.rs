use std::path::Path;
use std::process::{Command, Output};

use camp::spectral::taps_geometric_closed_form;

const TINY: &str = "\
m = 64
n = 128
iterations = 20
condition_numbers = 1, 10
trials = 6
pilot_trials = 4
theta_grid = 1.0, 2.0
master_seed = 9
";

fn camp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camp")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("sweep.conf");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn taps_prints_closed_form() {
    let out = camp(&["taps", "--delta", "0.6", "--kappa", "10", "--horizon", "6"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let expected = taps_geometric_closed_form(0.6, 10.0, 6).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,tap");
    assert_eq!(lines.len(), 8);
    for (t, line) in lines[1..].iter().enumerate() {
        let (idx, value) = line.split_once(',').unwrap();
        assert_eq!(idx.parse::<usize>().unwrap(), t);
        assert_eq!(value.parse::<f64>().unwrap(), expected[t]);
    }
}

#[test]
fn taps_reads_moment_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("moments.txt");
    // δ = 1 equal eigenvalues: every moment is 1 and every tap vanishes
    std::fs::write(&path, "1\n1\n1\n1\n1\n1\n").unwrap();
    let out = camp(&["taps", "--horizon", "3", "--moments", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(value.abs() < 1e-12, "{line}");
    }
}

#[test]
fn sweep_output_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = camp(&["--config", &cfg, "--workers", workers, "sweep", "--output", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let files: Vec<Vec<u8>> = ["trials.csv", "aggregate.csv", "plot.csv", "summary.txt"]
            .iter()
            .map(|f| std::fs::read(out_dir.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let trials = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3 * 2 * 6);
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m = 64\nn = 100\n");
    let out = camp(&["--config", &cfg, "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), "no equals sign\n");
    assert_eq!(camp(&["--config", &cfg, "run"]).status.code(), Some(2));
}

#[test]
fn diverging_run_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m = 614\nn = 1024\n");
    let out = camp(&["--config", &cfg, "run", "--algorithm", "amp", "--kappa", "1000", "--theta", "0.5"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn diagnose_passes_on_converging_run() {
    let out = camp(&["diagnose", "--kappa", "10", "--theta", "2.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("m_recursion_max_residual"));
}
