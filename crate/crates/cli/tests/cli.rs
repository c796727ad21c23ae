use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vanet-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("sim.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SHORT: &str = "# short run\nnum_vehicles = 20\nduration = 20\n";

#[test]
fn single_run_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), SHORT);
    let out = dir.path().join("out");
    let o = sim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| l.split(',').count() == 17));
    assert!(lines[1].starts_with("1,1,protocol,20,"));
    assert!(fs::read_to_string(out.join("summary.txt")).unwrap().contains("run 1"));
}

#[test]
fn sweep_with_seeds_gives_cross_product() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "duration = 5\n");
    let out = dir.path().join("out");
    let o = sim(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--sweep",
        "num_vehicles=50,100,150,200",
        "--seeds",
        "3",
        "--seed",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    let seeds: Vec<&str> = rows.iter().take(3).map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["10", "11", "12"]);
}

#[test]
fn invalid_config_exits_two_without_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "speed_min = 20\nspeed_max = 5\n");
    let out = dir.path().join("out");
    let o = sim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
}

#[test]
fn unknown_key_and_bad_sweep_exit_two() {
    let dir = TempDir::new().unwrap();
    let typo = config(dir.path(), "num_vehicels = 100\n");
    assert_eq!(sim(&["run", "--config", &typo]).status.code(), Some(2));
    let ok = config(dir.path(), SHORT);
    assert_eq!(sim(&["run", "--config", &ok, "--sweep", "bogus=1,2"]).status.code(), Some(2));
    assert_eq!(sim(&["run", "--config", "/nonexistent/sim.cfg"]).status.code(), Some(2));
}

#[test]
fn spawn_overflow_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "num_vehicles = 10000\nduration = 1\n");
    let o = sim(&["run", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn recompute_reproduces_the_row() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "num_vehicles = 40\nduration = 40\nblockage_approach = N\nblockage_start = 5\nblockage_end = 25\n",
    );
    let out = dir.path().join("out");
    let o = sim(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--trace", "packets,events"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("events.trace").exists());
    let again = dir.path().join("again");
    let ledger = out.join("packets.csv");
    let o = sim(&["recompute", "--ledger", ledger.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(out.join("metrics.csv")).unwrap(),
        fs::read_to_string(again.join("metrics.csv")).unwrap()
    );
}

#[test]
fn multi_run_traces_are_suffixed() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "num_vehicles = 8\nduration = 3\n");
    let out = dir.path().join("out");
    let o = sim(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "2", "--trace", "packets"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("packets_1.csv").exists());
    assert!(out.join("packets_2.csv").exists());
}

#[test]
fn mode_override_lands_in_the_row() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), SHORT);
    let out = dir.path().join("out");
    let o = sim(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--mode", "baseline"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("1,1,baseline,"));
}
