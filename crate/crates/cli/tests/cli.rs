mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;

use common::{run, run_ok};
use serde_json::Value;

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Planted pairs with features and labels, plus an oracle mock script keyed `{pair_id}#refine`.
fn planted_workspace(dir: &Path, n: &str) {
    run_ok(dir, &["synth", "planted", "--n", n, "--seed", "5", "-o", "pairs.jsonl", "--report", "planted.json"]).unwrap();
    let mut script = serde_json::Map::new();
    script.insert("*".into(), Value::String("Looks consistent with the features.".into()));
    for line in std::fs::read_to_string(dir.join("pairs.jsonl")).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let id = v["pair_id"].as_str().unwrap();
        let label = v["label"].as_u64().unwrap().to_string();
        script.insert(id.to_string(), Value::String(label.clone()));
        script.insert(format!("{id}#refine"), Value::String(label));
    }
    std::fs::write(dir.join("oracle.json"), serde_json::to_vec(&script).unwrap()).unwrap();
}

#[test]
fn golden_pipeline_matches() {
    let dir = tempfile::tempdir().unwrap();
    common::golden_pipeline(dir.path()).unwrap();
    let mismatched = common::check_golden(dir.path()).unwrap();
    assert!(mismatched.is_empty(), "differs from golden: {mismatched:?}");
    let sweep = json(&dir.path().join("sweep.json"));
    assert_eq!(sweep["result"]["best"]["spec"], "p:5,c:2");
    assert_eq!(sweep["schema_version"], 1);
    assert_eq!(sweep["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_flag_and_subcommand_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["sweep", "--bogus"][..], &["frobnicate"][..], &[][..]] {
        let out = run(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    let help = run(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"split": {"seed": 1}, "typo": true}"#).unwrap();
    planted_workspace(d, "20");
    let out = run(d, &["--config", "bad.json", "split", "--pairs", "pairs.jsonl", "--out-dir", "s", "--crs", "planar"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo"));

    let out = run(d, &["split", "--pairs", "pairs.jsonl", "--out-dir", "s", "--crs", "planar", "--train", "0.9"]);
    assert_eq!(out.status.code(), Some(1), "ratios no longer sum to 1");

    let out = run(d, &["sweep", "--train", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(1));

    // planar coordinates are out of range for the default geographic mode
    let out = run(d, &["sweep", "--train", "pairs.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    planted_workspace(d, "30");
    std::fs::write(d.join("cfg.json"), r#"{"split": {"seed": 3}, "features": {"crs": "planar"}}"#).unwrap();
    let base = ["--config", "cfg.json", "split", "--pairs", "pairs.jsonl", "--report"];
    run_ok(d, &[&base[..], &["a.json", "--out-dir", "a"]].concat()).unwrap();
    run_ok(d, &[&base[..], &["b.json", "--out-dir", "b", "--seed", "5"]].concat()).unwrap();
    let (a, b) = (json(&d.join("a.json")), json(&d.join("b.json")));
    assert_eq!(a["seeds"]["split"], 3);
    assert_eq!(b["seeds"]["split"], 5);
    assert_ne!(a["config_hash"], b["config_hash"]);
    assert_eq!(a["result"], serde_json::json!({"train": 24, "val": 3, "test": 3}));
    assert_ne!(
        std::fs::read(d.join("a/train.jsonl")).unwrap(),
        std::fs::read(d.join("b/train.jsonl")).unwrap()
    );
}

#[test]
fn prompt_refine_and_eval_compose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    planted_workspace(d, "40");
    let model = ["--crs", "planar", "--backend", "mock", "--script", "oracle.json"];

    run_ok(d, &[&["prompt", "--pairs", "pairs.jsonl", "--exchanges", "ex.jsonl", "--report", "p.json"][..], &model].concat())
        .unwrap();
    assert_eq!(json(&d.join("p.json"))["result"]["eval"]["accuracy"], 1.0);

    run_ok(d, &["eval", "--pairs", "pairs.jsonl", "--predictions", "ex.jsonl", "--crs", "planar", "--report", "e.json"])
        .unwrap();
    let e = json(&d.join("e.json"));
    assert_eq!(e["result"]["eval"]["accuracy"], 1.0);
    assert_eq!(e["result"]["missing"], 0);

    run_ok(d, &["sweep", "--train", "pairs.jsonl", "--crs", "planar", "--report", "sweep.json"]).unwrap();
    run_ok(
        d,
        &[
            &["refine", "--pairs", "pairs.jsonl", "--initial", "worst", "--sweep", "sweep.json"][..],
            &["--records", "r.jsonl", "--report", "r.json"],
            &model,
        ]
        .concat(),
    )
    .unwrap();
    let r = json(&d.join("r.json"));
    assert_eq!(r["result"]["final_accuracy"], 1.0);
    assert!(r["result"]["initial_accuracy"].as_f64().unwrap() < 1.0);
    let records = std::fs::read_to_string(d.join("r.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 40);

    run_ok(d, &["eval", "--pairs", "pairs.jsonl", "--predictions", "r.jsonl", "--crs", "planar", "--report", "e2.json"])
        .unwrap();
    assert_eq!(json(&d.join("e2.json"))["result"]["eval"]["accuracy"], 1.0);
}

#[test]
fn unscripted_mock_replies_are_parse_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    planted_workspace(d, "10");
    std::fs::write(d.join("empty.json"), "{}").unwrap();
    let out = run_ok(d, &["prompt", "--pairs", "pairs.jsonl", "--crs", "planar", "--backend", "mock", "--script", "empty.json"])
        .unwrap();
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["result"]["parse_failures"], 10);
    assert_eq!(rep["result"]["eval"]["accuracy"], 0.0);

    let out = run_ok(
        d,
        &["prompt", "--pairs", "pairs.jsonl", "--crs", "planar", "--script", "empty.json", "--policy", "abstain"],
    )
    .unwrap();
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["result"]["eval"], Value::Null);
}

/// Answers every request with the given status.
fn refuse_all(status: u16) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end().to_ascii_lowercase();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let mut s = reader.into_inner();
            let _ = write!(s, "HTTP/1.1 {status} X\r\ncontent-length: 2\r\nconnection: close\r\n\r\n{{}}");
        }
    });
    format!("http://{addr}/v1")
}

#[test]
fn rejected_credentials_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    planted_workspace(d, "5");
    let base = refuse_all(401);
    let out = Command::new(common::bin())
        .current_dir(d)
        .args(["prompt", "--pairs", "pairs.jsonl", "--crs", "planar", "--backend", "http"])
        .env("LLM_API_BASE", base)
        .env("LLM_MODEL", "m")
        .env("LLM_API_KEY", "wrong")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("401"));
}

#[test]
fn http_backend_needs_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    planted_workspace(d, "5");
    let out = Command::new(common::bin())
        .current_dir(d)
        .args(["prompt", "--pairs", "pairs.jsonl", "--crs", "planar", "--backend", "http"])
        .env_remove("LLM_API_BASE")
        .env_remove("LLM_MODEL")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LLM_API_BASE"));
}

#[test]
fn synth_gen_and_grade() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(d, &["synth", "gen", "--task", "ch", "--n", "12", "--seed", "3", "-o", "ch.jsonl"]).unwrap();
    run_ok(d, &["synth", "gen", "--task", "ch", "--n", "12", "--seed", "3", "-o", "blind.jsonl", "--blind"]).unwrap();
    let text = std::fs::read_to_string(d.join("ch.jsonl")).unwrap();
    let answers: String = text
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            format!("{}\n", serde_json::json!({"instance_id": v["instance_id"], "answer": v["truth"]}))
        })
        .collect();
    assert!(!std::fs::read_to_string(d.join("blind.jsonl")).unwrap().contains("truth"));
    std::fs::write(d.join("answers.jsonl"), answers).unwrap();
    // blind instances are graded against solved truths
    let out = run_ok(d, &["synth", "grade", "--instances", "blind.jsonl", "--answers", "answers.jsonl"]).unwrap();
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["result"]["per_kind"]["ch"]["accuracy"], 1.0);

    std::fs::write(d.join("none.jsonl"), "").unwrap();
    let out = run_ok(d, &["synth", "grade", "--instances", "ch.jsonl", "--answers", "none.jsonl"]).unwrap();
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["result"]["per_kind"]["ch"]["missing"], 12);
}

#[test]
fn union_candidates_from_geojson() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let layer = |features: &[(&str, [[f64; 2]; 2])]| {
        let fs: Vec<Value> = features
            .iter()
            .map(|(id, c)| {
                serde_json::json!({"type": "Feature", "id": id, "properties": {},
                    "geometry": {"type": "LineString", "coordinates": c}})
            })
            .collect();
        serde_json::to_vec(&serde_json::json!({"type": "FeatureCollection", "features": fs})).unwrap()
    };
    std::fs::write(d.join("a.geojson"), layer(&[("a1", [[0.0, 0.0], [0.001, 0.001]]), ("a2", [[0.01, 0.0], [0.011, 0.0]])]))
        .unwrap();
    std::fs::write(d.join("b.geojson"), layer(&[("b1", [[0.0, 0.001], [0.001, 0.0]]), ("b2", [[0.02, 0.0], [0.021, 0.0]])]))
        .unwrap();
    let out = run_ok(d, &["candidates", "union", "--left", "a.geojson", "--right", "b.geojson", "-o", "u.jsonl"]).unwrap();
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["result"]["candidates"], 1);
    let line = std::fs::read_to_string(d.join("u.jsonl")).unwrap();
    let v: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!((v["left_id"].as_str(), v["right_id"].as_str()), (Some("a1"), Some("b1")));
    assert!(v.get("label").is_none());
}
