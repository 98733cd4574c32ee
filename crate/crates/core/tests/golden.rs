//! Frozen regression logs for the bundled demo scene. Set `UPDATE_GOLDEN=1`
//! to rewrite them after an intended behavior change, then review the diff.

use std::path::PathBuf;

use activecam::harness::*;
use sha2::{Digest, Sha256};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if expected != actual {
        let first = expected.lines().zip(actual.lines()).position(|(a, b)| a != b);
        panic!("{name} differs from the golden copy (first differing line {first:?})");
    }
}

fn demo_heuristic_run() -> (EpisodeSpec, EpisodeOutput) {
    let scene = demo_scene();
    let spec = demo_episode(3);
    let cfg = EpisodeConfig { budget: 120, snapshot_stride: Some(20), ..Default::default() };
    let out = run_episode(&scene, &spec, &cfg, &mut Policy::Modular(CameraController::Heuristic)).unwrap();
    (spec, out)
}

#[test]
fn demo_trajectory_matches_golden_log() {
    let (_, out) = demo_heuristic_run();
    let log: String = out.records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    check("demo_heuristic.jsonl", &log);
}

#[test]
fn demo_frames_match_golden_hashes() {
    let (spec, out) = demo_heuristic_run();
    let scene = demo_scene().with_goals(spec.goals.clone());
    let mut hashes = String::new();
    for (step, map) in &out.snapshots {
        let rec = out.records.iter().find(|r| r.step == *step).unwrap();
        let img = render_frame(&scene, map, rec, 2.4);
        let digest = Sha256::digest(img.as_raw());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hashes.push_str(&format!("{step} {hex}\n"));
    }
    check("demo_frames.sha256", &hashes);
}
