//! End-to-end behavior of the `bivo` binary: exit codes, determinism,
//! pipeline ordering, file outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bivo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bivo"))
}

struct Dirs {
    root: tempfile::TempDir,
}

impl Dirs {
    fn new() -> Dirs {
        Dirs { root: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    /// Base overrides shared by every invocation in this sandbox: tiny
    /// workloads, all paths inside the tempdir.
    fn sets(&self) -> Vec<String> {
        let p = |n: &str| self.path(n).to_string_lossy().into_owned();
        vec![
            format!("paths.scenes={}", p("scenes")),
            format!("paths.checkpoints={}", p("ckpt")),
            format!("paths.logs={}", p("logs")),
            format!("paths.reports={}", p("reports")),
            "gen.count=4".into(),
            "gen.mix=occluding_truck_crossing:0.5,random_traffic:0.5".into(),
            "train.ds.epochs=1".into(),
            "train.gen.epochs=1".into(),
            "train.ds.batch=16".into(),
            "train.gen.batch=8".into(),
            "train.max_pairs=120".into(),
            "planner.j=12".into(),
            "planner.k=30".into(),
            "bench.iters=3".into(),
        ]
    }

    fn run(&self, args: &[&str]) -> Output {
        let mut cmd = bivo();
        for s in self.sets() {
            cmd.arg("--set").arg(s);
        }
        cmd.args(args);
        cmd.output().expect("binary runs")
    }
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Byte content of every file under a directory, keyed by relative path.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            map.insert(name, std::fs::read(&path).unwrap());
        }
    }
    map
}

#[test]
fn unknown_config_key_exits_2() {
    let d = Dirs::new();
    let out = d.run(&["--set", "no.such.key=1", "gen-data"]);
    assert_exit(&out, 2);
}

#[test]
fn out_of_range_value_exits_2() {
    let d = Dirs::new();
    let out = d.run(&["--set", "planner.pi_e=2.0", "gen-data"]);
    assert_exit(&out, 2);
}

#[test]
fn bad_stage_name_exits_2() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    let out = d.run(&["train", "--stage", "both"]);
    assert_exit(&out, 2);
}

#[test]
fn unwritable_scene_dir_exits_3() {
    let d = Dirs::new();
    // A path under a regular file can never become a directory.
    let blocker = d.path("blocker");
    std::fs::write(&blocker, b"x").unwrap();
    let dest = blocker.join("scenes");
    let out = d.run(&["gen-data", "--out", dest.to_str().unwrap()]);
    assert_exit(&out, 3);
}

#[test]
fn generator_before_driver_sensor_exits_4() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    let out = d.run(&["train", "--stage", "generator"]);
    assert_exit(&out, 4);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ordering"), "stderr: {err}");
}

#[test]
fn eval_without_scenes_exits_4() {
    let d = Dirs::new();
    std::fs::create_dir_all(d.path("scenes")).unwrap();
    let out = d.run(&["eval"]);
    assert_exit(&out, 4);
}

#[test]
fn eval_without_checkpoints_exits_4() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    let out = d.run(&["eval"]);
    assert_exit(&out, 4);
}

#[test]
fn gen_data_is_byte_identical_and_manifest_counts_match() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    let first = dir_bytes(&d.path("scenes"));
    assert_eq!(first.len(), 4 + 1, "4 scenes plus manifest");

    let manifest: serde_json::Value =
        serde_json::from_slice(&first["manifest.json"]).unwrap();
    assert_eq!(manifest["count"], 4);
    let listed = manifest["scenes"].as_array().unwrap();
    assert_eq!(listed.len(), 4);
    for entry in listed {
        let file = entry["file"].as_str().unwrap();
        assert!(first.contains_key(file), "manifest lists {file}");
    }

    // Regenerating over the same directory must reproduce every byte.
    assert_ok(&d.run(&["gen-data"]));
    assert_eq!(dir_bytes(&d.path("scenes")), first);
}

#[test]
fn training_csv_rows_match_reported_steps_and_resume_appends() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    let stdout = assert_ok(&d.run(&["train", "--stage", "driversensor"]));
    let steps: usize = stdout
        .split(" steps this run")
        .next()
        .and_then(|s| s.rsplit(' ').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("cannot parse steps from {stdout:?}"));
    let csv = d.path("logs/driver_sensor_loss.csv");
    let data_rows = |p: &Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .count()
    };
    assert_eq!(data_rows(&csv), steps);

    assert_ok(&d.run(&["train", "--stage", "driversensor", "--resume"]));
    assert_eq!(data_rows(&csv), 2 * steps, "resume appends a second segment");

    // The generator stage now has its prerequisite.
    let stdout = assert_ok(&d.run(&["train", "--stage", "generator"]));
    let gen_steps: usize = stdout
        .split(" steps this run")
        .next()
        .and_then(|s| s.rsplit(' ').next())
        .and_then(|s| s.parse().ok())
        .unwrap();
    assert_eq!(data_rows(&d.path("logs/generator_loss.csv")), gen_steps);
}

#[test]
fn eval_from_log_reproduces_reports_bit_exactly() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    assert_ok(&d.run(&["train", "--stage", "driversensor"]));
    assert_ok(&d.run(&["train", "--stage", "generator"]));
    assert_ok(&d.run(&["eval", "--loop", "open", "--max-scenes", "2"]));

    let txt = d.path("reports/eval_open_report.txt");
    let json = d.path("reports/eval_open_report.json");
    let first_txt = std::fs::read(&txt).unwrap();
    let first_json = std::fs::read(&json).unwrap();
    std::fs::remove_file(&txt).unwrap();
    std::fs::remove_file(&json).unwrap();

    assert_ok(&d.run(&["eval", "--loop", "open", "--from-log"]));
    assert_eq!(std::fs::read(&txt).unwrap(), first_txt);
    assert_eq!(std::fs::read(&json).unwrap(), first_json);
}

#[test]
fn closed_loop_eval_writes_its_own_log() {
    let d = Dirs::new();
    assert_ok(&d.run(&["gen-data"]));
    assert_ok(&d.run(&[
        "--set",
        "replay.modes=no_reasoning,oracle",
        "eval",
        "--loop",
        "closed",
        "--max-scenes",
        "1",
    ]));
    assert!(d.path("logs/eval_closed.ndjson").exists());
    assert!(d.path("reports/eval_closed_report.txt").exists());
}

#[test]
fn straight_empty_ogm_render_has_no_occluded_cells() {
    let d = Dirs::new();
    assert_ok(&d.run(&[
        "--set",
        "gen.mix=straight_empty:1.0",
        "--set",
        "gen.count=1",
        "gen-data",
    ]));
    let scene = std::fs::read_dir(d.path("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().contains("straight_empty"))
        .expect("straight_empty scene exists");
    assert_ok(&d.run(&[
        "render",
        "--scene",
        scene.to_str().unwrap(),
        "--step",
        "4",
        "--overlays",
        "ogm",
    ]));
    let pgm = std::fs::read_dir(d.path("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "pgm"))
        .expect("pgm written");
    let bytes = std::fs::read(&pgm).unwrap();
    // P5 header is three newline-terminated lines, then raw cells.
    let body_start = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .map(|(i, _)| i + 1)
        .nth(2)
        .unwrap();
    let body = &bytes[body_start..];
    assert!(!body.is_empty());
    assert!(
        body.iter().all(|b| [0u8, 128, 255].contains(b)),
        "cells use the free/occluded/occupied palette only"
    );
    assert!(
        body.iter().all(|&b| b != 128),
        "an empty scene has no occluded cells"
    );
}

#[test]
fn occluded_scene_ogm_render_uses_all_three_values() {
    let d = Dirs::new();
    assert_ok(&d.run(&[
        "--set",
        "gen.mix=occluding_truck_crossing:1.0",
        "--set",
        "gen.count=1",
        "gen-data",
    ]));
    let scene = std::fs::read_dir(d.path("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().contains("truck"))
        .unwrap();
    assert_ok(&d.run(&[
        "render",
        "--scene",
        scene.to_str().unwrap(),
        "--step",
        "6",
        "--overlays",
        "ogm",
    ]));
    let pgm = std::fs::read_dir(d.path("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "pgm"))
        .unwrap();
    let bytes = std::fs::read(&pgm).unwrap();
    let body_start = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .map(|(i, _)| i + 1)
        .nth(2)
        .unwrap();
    let body = &bytes[body_start..];
    for v in [0u8, 128, 255] {
        assert!(body.contains(&v), "value {v} appears behind a truck occluder");
    }
}

#[test]
fn render_sample_overlay_needs_both_checkpoints() {
    let d = Dirs::new();
    assert_ok(&d.run(&[
        "--set",
        "gen.mix=occluding_truck_crossing:1.0",
        "--set",
        "gen.count=1",
        "gen-data",
    ]));
    let scene = std::fs::read_dir(d.path("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().contains("truck"))
        .unwrap();
    let out = d.run(&["render", "--scene", scene.to_str().unwrap(), "--overlays", "samples"]);
    assert_exit(&out, 4);
}

#[test]
fn bench_writes_workload_and_latencies() {
    let d = Dirs::new();
    let stdout = assert_ok(&d.run(&["bench"]));
    assert!(stdout.contains("median"), "stdout: {stdout}");
    let payload: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.path("reports/bench.json")).unwrap()).unwrap();
    assert_eq!(payload["workload"]["j"], 12);
    assert_eq!(payload["workload"]["k"], 30);
    assert_eq!(payload["modes"].as_array().unwrap().len(), 5);
    for row in payload["modes"].as_array().unwrap() {
        assert!(row["median_ms"].as_f64().unwrap() > 0.0);
        assert!(row["p95_ms"].as_f64().unwrap() >= row["median_ms"].as_f64().unwrap());
    }
}

#[test]
fn env_var_supplies_the_default_config() {
    let d = Dirs::new();
    let conf = d.path("run.conf");
    let mut text = String::new();
    for s in d.sets() {
        let (k, v) = s.split_once('=').unwrap();
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str("gen.count = 2\n");
    std::fs::write(&conf, text).unwrap();

    let out = bivo()
        .env("BIVO_CONFIG", &conf)
        .arg("gen-data")
        .output()
        .unwrap();
    assert_ok(&out);
    let scenes = dir_bytes(&d.path("scenes"));
    assert_eq!(scenes.len(), 2 + 1, "2 scenes plus manifest");
}
