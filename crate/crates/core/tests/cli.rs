use ris_sim::harness::{SceneFile, CSV_COLUMNS};
use std::process::{Command, Output};

fn ris_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-sim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn missing_config_exits_with_two() {
    let o = ris_sim(&["coverage-sweep", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[sweep]\ntrails = 3\n").unwrap();
    let o = ris_sim(&["rate-sweep", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_workers_is_rejected() {
    let o = ris_sim(&["coverage-sweep", "--trials", "1", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn candidate_dump_respects_tangent_bound() {
    let o = ris_sim(&["candidate-dump", "--trial", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("wall,x,y"));
    // At most two candidates per obstacle.
    let rows = lines.count();
    assert!(rows > 0 && rows <= 2 * 5, "{rows} candidates");
}

#[test]
fn scene_gen_round_trips() {
    let o = ris_sim(&["scene-gen", "--trials", "3", "--seed", "4"]);
    assert!(o.status.success());
    let file: SceneFile = toml::from_str(&stdout(&o)).unwrap();
    assert_eq!(file.scenes.len(), 3);
    assert!(file.scenes.iter().all(|s| s.scene.obstacles.len() == 5));
}

#[test]
fn coverage_sweep_writes_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cov.csv");
    let o = ris_sim(&["coverage-sweep", "--trials", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    // J = 0..4 for four methods.
    assert_eq!(text.lines().count(), 1 + 5 * 4);
}

#[test]
fn selfcheck_passes() {
    let o = ris_sim(&["selfcheck"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(!text.is_empty() && text.lines().all(|l| l.starts_with("PASS")));
}
