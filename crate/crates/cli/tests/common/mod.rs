//! Helpers shared by the CLI integration targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_geomatch")
}

/// Runs the binary in `dir` and returns its output, whatever the exit status.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn geomatch")
}

/// Runs the binary and fails unless it exits 0.
pub fn run_ok(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let out = run(dir, args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`geomatch {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Files produced by [`golden_pipeline`] that are pinned in `tests/golden`.
pub const GOLDEN_FILES: [&str; 7] = [
    "planted.json",
    "candidates.json",
    "features.json",
    "split.json",
    "sweep.json",
    "classify.json",
    "predictions.jsonl",
];

/// planted fixture -> candidates -> features -> split -> sweep -> classify, all in `dir`.
pub fn golden_pipeline(dir: &Path) -> Result<(), String> {
    let steps: [&[&str]; 6] = [
        &["synth", "planted", "--n", "200", "--seed", "1", "--geojson-dir", "fx", "--report", "planted.json"],
        &[
            "candidates", "join", "--roads", "fx/roads.geojson", "--sidewalks", "fx/sidewalks.geojson",
            "-o", "candidates.jsonl", "--report", "candidates.json",
        ],
        &[
            "features", "--pairs", "candidates.jsonl", "--labels", "fx/labels.jsonl", "-o", "features.jsonl",
            "--report", "features.json",
        ],
        &["split", "--pairs", "features.jsonl", "--out-dir", "split", "--seed", "0", "--report", "split.json"],
        &["sweep", "--train", "split/train.jsonl", "--task", "join", "--report", "sweep.json"],
        &[
            "classify", "--pairs", "split/test.jsonl", "--sweep", "sweep.json", "-o", "predictions.jsonl",
            "--report", "classify.json",
        ],
    ];
    for args in steps {
        run_ok(dir, args)?;
    }
    Ok(())
}

/// Compares the pipeline outputs in `dir` with the committed golden files.
/// With `GEOMATCH_UPDATE_GOLDEN` set, rewrites the golden files instead.
pub fn check_golden(dir: &Path) -> Result<Vec<String>, String> {
    let update = std::env::var_os("GEOMATCH_UPDATE_GOLDEN").is_some();
    let gdir = golden_dir();
    let mut mismatched = Vec::new();
    for name in GOLDEN_FILES {
        let got = std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let path = gdir.join(name);
        if update {
            std::fs::create_dir_all(&gdir).map_err(|e| e.to_string())?;
            std::fs::write(&path, &got).map_err(|e| format!("{}: {e}", path.display()))?;
            continue;
        }
        let want = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if got != want {
            mismatched.push(name.to_string());
        }
    }
    Ok(mismatched)
}
