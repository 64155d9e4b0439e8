//! End-to-end runs of the `pitpinn` binary on tiny problems.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"schema_version = 1

[network]
m_f = 2
m_w = 4
m_h = 1

[sampling]
N_g = [3, 2, 2]
N_b = 4
N_i = 4

[training]
s_max = 3
S_s = 1
"#;

fn pitpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pitpinn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The builtin two-pit scenario with a very short end time.
fn short_scenario(dir: &Path) -> std::path::PathBuf {
    let dump = pitpinn(&["scenario", "2d-2pit"]);
    assert_eq!(code(&dump), 0);
    let text = String::from_utf8(dump.stdout).unwrap().replace("t_end = 10.0", "t_end = 0.01");
    let p = dir.join("short.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn reference(dir: &Path, scenario: &Path, name: &str, h: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = pitpinn(&["reference", path(scenario), "--out", path(&out), "--resolution", h]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn scenario_dump_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let p = short_scenario(dir.path());
    let out = dir.path().join("run");
    let o = pitpinn(&["train", path(&p), "--steps", "0", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let again = std::fs::read_to_string(out.join("scenario.toml")).unwrap();
    assert_eq!(again, std::fs::read_to_string(&p).unwrap());
}

#[test]
fn zero_steps_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = pitpinn(&["train", "2d-2pit", "--steps", "0", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("checkpoint_final.txt").exists());
    assert!(out.join("manifest.toml").exists());
    assert!(!out.join("snapshots").exists());
}

#[test]
fn identical_runs_give_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let mut ckpts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = pitpinn(&[
            "train", "2d-2pit", "--config", path(&cfg), "--seed", "5", "--workers", "1", "--resolution", "0.1",
            "--out", path(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 4, "header plus three steps");
        assert!(out.join("snapshots/snapshot_3.csv").exists());
        ckpts.push(std::fs::read(out.join("checkpoint_final.txt")).unwrap());
    }
    assert_eq!(ckpts[0], ckpts[1]);
}

#[test]
fn reference_then_self_comparison_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path());
    let r = reference(dir.path(), &sc, "ref", "0.025");
    assert!(r.join("run_log.csv").exists());
    assert!(r.join("snapshots/snapshot_0.vtk").exists());
    let o = pitpinn(&["compare", path(&r), path(&r), "--out", path(&dir.path().join("cmp"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!((cols[1], cols[2]), (0.0, 0.0), "{row}");
    }
}

#[test]
fn mismatched_grids_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path());
    let a = reference(dir.path(), &sc, "fine", "0.025");
    let b = reference(dir.path(), &sc, "finer", "0.02");
    let o = pitpinn(&["compare", path(&a), path(&b), "--out", path(&dir.path().join("cmp"))]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn invalid_scenario_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "schema_version = 1\n\n[scenario]\nt_end = -1.0\n").unwrap();
    let o = pitpinn(&["train", path(&p), "--steps", "0", "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    let o = pitpinn(&["train", "no-such-scenario", "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_variant_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = pitpinn(&["ablate", "2d-2pit", "--variants", "sharp,bogus", "--out", path(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn single_variant_ablation_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let sc = short_scenario(dir.path());
    let r = reference(dir.path(), &sc, "ref", "0.025");
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("abl");
    let o = pitpinn(&[
        "ablate", path(&sc), "--config", path(&cfg), "--variants", "sharp", "--reference-dir", path(&r), "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "variant,final_rms_error,wall_time_s");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("sharp,"));
    assert!(out.join("sharp/checkpoint_final.txt").exists());
}
