use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jigsaw_core::ingest::synthetic_image;
use jigsaw_core::metrics::expected_assembly;
use jigsaw_core::pipeline::AssemblyFile;
use jigsaw_core::puzzle::{PuzzleSpec, Rotation};
use serde_json::Value;

const PX: &str = "14";

fn jigsaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jigsaw")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jigsaw(args);
    assert!(
        out.status.success(),
        "jigsaw {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// An 84×56 test image: 4 rows × 6 cols of 14-pixel pieces.
fn image(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let path = dir.join(name);
    synthetic_image(84, 56, seed).save_png(&path).unwrap();
    path
}

fn scrambled(dir: &Path, puzzle_type: &str) -> PathBuf {
    let img = image(dir, "img.png", 4);
    let bundle = dir.join(format!("bundle{puzzle_type}"));
    ok(&["scramble", s(&img), "-o", s(&bundle), "--piece-px", PX, "--type", puzzle_type, "--seed", "7"]);
    bundle
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn scramble_writes_a_bundle_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(dir.path(), "img.png", 1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let text = ok(&["scramble", s(&img), "-o", s(out), "--piece-px", PX, "--type", "2", "--seed", "7"]);
        assert!(text.contains("24 pieces"), "{text}");
    }
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["piece_count"], 24);
    assert_eq!(manifest["type_tag"], "type2");
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn scramble_records_noise_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(dir.path(), "img.png", 1);
    let out = dir.path().join("noisy");
    ok(&["scramble", s(&img), "-o", s(&out), "--piece-px", PX, "--noise-sigma", "4000"]);
    assert_eq!(read_json(&out.join("manifest.json"))["noise_sigma"], 4000.0);
}

#[test]
fn scramble_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let img = image(dir.path(), "img.png", 1);
    let out = dir.path().join("x");
    let uneven = jigsaw(&["scramble", s(&img), "-o", s(&out), "--piece-px", "16"]);
    assert_eq!(uneven.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&uneven.stderr).contains("multiple"));
    // Cropping makes the same image usable.
    ok(&["scramble", s(&img), "-o", s(&out), "--piece-px", "16", "--crop"]);
    let missing = jigsaw(&["scramble", s(&dir.path().join("none.png")), "-o", s(&out)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn solve_ignores_a_corrupted_truth_file() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "1");
    std::fs::write(bundle.join("truth.json"), "{ not json").unwrap();
    let out = dir.path().join("solved");
    let text = ok(&["solve", s(&bundle), "-o", s(&out)]);
    assert!(text.contains("hybrid: kept"), "{text}");
    assert!(text.contains("free L0") && text.contains("constrained L0"));
    for f in ["assembly.json", "assembled.png", "trace.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in ["k", "universe", "active", "rejected", "objective_x", "objective_y", "components", "largest_component"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn solve_then_eval_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "1");
    ok(&["solve", s(&bundle)]);
    let (json, csv) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let text = ok(&["eval", s(&bundle), "--json", s(&json), "--csv", s(&csv)]);
    assert!(text.contains("perfect true"), "{text}");
    let report = read_json(&json);
    for key in ["direct", "neighbor", "largest", "perfect"] {
        assert_eq!(report[key], 1.0, "{key}");
    }
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let headers = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    let get = |k: &str| row.get(headers.iter().position(|h| h == k).unwrap()).unwrap().to_string();
    assert_eq!(get("direct").parse::<f64>().unwrap(), 1.0);
    assert_eq!(get("type"), "type1");
    assert_eq!(get("variant"), report["variant"].as_str().unwrap());
}

#[test]
fn eval_needs_truth() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "1");
    ok(&["solve", s(&bundle)]);
    std::fs::remove_file(bundle.join("truth.json")).unwrap();
    let out = jigsaw(&["eval", s(&bundle)]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn type2_eval_uses_the_best_frame_unless_strict() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "2");
    ok(&["solve", s(&bundle)]);
    // Rewrite the answer as the truth turned a half turn.
    let path = bundle.join("assembly.json");
    let mut file: AssemblyFile = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let truth: Vec<jigsaw_core::ingest::TruthEntry> = serde_json::from_value(read_json(&bundle.join("truth.json"))).unwrap();
    let spec = PuzzleSpec::new(4, 6, 14).unwrap();
    file.assembly = expected_assembly(&spec, &truth).rotated(Rotation::new(2));
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    assert!(ok(&["eval", s(&bundle)]).contains("perfect true"));
    assert!(ok(&["eval", s(&bundle), "--strict-frame"]).contains("perfect false"));
}

#[test]
fn distance_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "1");
    let cache = dir.path().join("d.bin");
    let first = ok(&["solve", s(&bundle), "--cache-distances", s(&cache)]);
    assert!(!first.contains("from cache") && cache.exists());
    let second = ok(&["solve", s(&bundle), "--cache-distances", s(&cache)]);
    assert!(second.contains("distances from cache"), "{second}");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "1");
    let cfg = dir.path().join("solver.toml");
    std::fs::write(&cfg, "mode = \"constrained\"\nmax_iters = 3\n").unwrap();
    let text = ok(&["solve", s(&bundle), "--config", s(&cfg)]);
    assert!(text.starts_with("variant constrained"), "{text}");
    let text = ok(&["solve", s(&bundle), "--config", s(&cfg), "--variant", "free"]);
    assert!(text.starts_with("variant free"), "{text}");
    std::fs::write(&cfg, "mode = \"constrained\"\nbogus = 1\n").unwrap();
    assert_eq!(jigsaw(&["solve", s(&bundle), "--config", s(&cfg)]).status.code(), Some(2));
    let json = dir.path().join("solver.json");
    std::fs::write(&json, r#"{"mode": "free", "reject_tol": 1e-4}"#).unwrap();
    assert!(ok(&["solve", s(&bundle), "--config", s(&json)]).starts_with("variant free"));
}

#[test]
fn malformed_bundle_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = scrambled(dir.path(), "1");
    std::fs::remove_file(bundle.join("piece_3.png")).unwrap();
    assert_eq!(jigsaw(&["solve", s(&bundle)]).status.code(), Some(2));
    std::fs::write(bundle.join("manifest.json"), "[]").unwrap();
    assert_eq!(jigsaw(&["solve", s(&bundle)]).status.code(), Some(2));
    assert_eq!(jigsaw(&["solve", "--variant", "fastest", s(&bundle)]).status.code(), Some(2));
}

#[test]
fn bench_emits_run_and_average_rows() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    std::fs::create_dir(&images).unwrap();
    image(&images, "a.png", 1);
    image(&images, "b.png", 2);
    std::fs::write(images.join("notes.txt"), "not an image").unwrap();
    let csv_path = dir.path().join("bench.csv");
    ok(&[
        "bench",
        s(&images),
        "-o",
        s(&csv_path),
        "--piece-px",
        PX,
        "--noise-grid",
        "0,2000,4000",
        "--runs",
        "5",
        "--variant",
        "free",
    ]);
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |k: &str| headers.iter().position(|h| h == k).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 36);
    let (averages, runs): (Vec<_>, Vec<_>) = rows.iter().partition(|r| &r[col("run")] == "avg");
    assert_eq!((runs.len(), averages.len()), (30, 6));
    for avg in &averages {
        let same_cell: Vec<f64> = runs
            .iter()
            .filter(|r| r[col("image")] == avg[col("image")] && r[col("sigma")] == avg[col("sigma")])
            .map(|r| r[col("neighbor")].parse().unwrap())
            .collect();
        assert_eq!(same_cell.len(), 5);
        let mean = same_cell.iter().sum::<f64>() / 5.0;
        let recorded: f64 = avg[col("neighbor")].parse().unwrap();
        assert!((mean - recorded).abs() < 1e-12);
    }
    assert!(runs.iter().all(|r| r[col("seconds")].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn bench_fails_when_nothing_is_usable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.txt"), "nope").unwrap();
    let out = jigsaw(&["bench", s(dir.path()), "-o", s(&dir.path().join("o.csv"))]);
    assert_ne!(out.status.code(), Some(0));
}
