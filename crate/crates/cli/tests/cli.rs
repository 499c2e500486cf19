use std::path::Path;
use std::process::{Command, Output};

fn attrib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrib"))
        .args(args)
        .env_remove("ATTRIB_GEN_URL")
        .env_remove("ATTRIB_NLI_URL")
        .env_remove("ATTRIB_SENS_URL")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("spawn attrib")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dataset(path: &Path, n: usize) {
    let mut text = String::new();
    for i in 0..n {
        let rec = serde_json::json!({
            "id": format!("r{i}"),
            "turns": [
                {"speaker": 0, "text": format!("Tell me about lake {i}.")},
                {"speaker": 1, "text": "It is a large lake."},
                {"speaker": 0, "text": format!("How deep is lake {i}?")},
            ],
            "answer": format!("Lake {i} is {} meters deep.", 10 + i),
            "answer_url": format!("https://example.org/lake/{i}"),
            "evidence": format!("Lake {i} lies in the north. Lake {i} is {} meters deep. Fish live there.", 10 + i),
        });
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&attrib(&["--help"])), 0);
    assert_eq!(code(&attrib(&["grid", "--help"])), 0);
    assert_eq!(code(&attrib(&["bogus"])), 1);
    assert_eq!(code(&attrib(&["corpus", "filter", "--nope"])), 1);
    let missing = attrib(&["corpus", "filter", "--in", "/nonexistent/x.jsonl", "--out", "/nonexistent/y.jsonl"]);
    assert_eq!(code(&missing), 1);
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn http_mode_without_endpoints_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    write_dataset(&data, 3);
    let out = attrib(&["grid", "run", "--dataset", s(&data), "--out", s(&dir.path().join("g.jsonl"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ATTRIB_GEN_URL"));
}

#[test]
fn mock_pipeline_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_dataset(&p("d.jsonl"), 5);
    let m = ["--backend", "mock", "--seed", "3"];
    let run = |rest: &[&str]| {
        let args: Vec<&str> = m.iter().chain(rest).copied().collect();
        let out = attrib(&args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };

    run(&["corpus", "filter", "--in", s(&p("d.jsonl")), "--out", s(&p("f.jsonl"))]);
    run(&["retrieve", "index", "--dataset", s(&p("f.jsonl")), "--out", s(&p("i.json"))]);
    let hits: serde_json::Value = serde_json::from_slice(
        &run(&["retrieve", "query", "--index", s(&p("i.json")), "--q", "lake 3 deep", "--k", "2"]).stdout,
    )
    .unwrap();
    assert_eq!(hits.as_array().unwrap().len(), 2);
    let recall: serde_json::Value = serde_json::from_slice(
        &run(&["retrieve", "recall", "--index", s(&p("i.json")), "--dataset", s(&p("f.jsonl"))]).stdout,
    )
    .unwrap();
    assert!(recall.to_string().contains("recall"));

    run(&[
        "grid",
        "run",
        "--dataset",
        s(&p("f.jsonl")),
        "--index",
        s(&p("i.json")),
        "--out",
        s(&p("g.jsonl")),
        "--models",
        "S,L",
        "--temperatures",
        "0",
        "--prompts",
        "golden,top2,no-evidence",
    ]);
    run(&["grid", "rerank", "--archive", s(&p("g.jsonl")), "--policy", "max-attr", "--out", s(&p("r.json"))]);
    run(&["plot", "--archive", s(&p("g.jsonl")), "--rerank", s(&p("r.json")), "--out", s(&p("plots"))]);
    let csv = std::fs::read_to_string(p("plots/plot.csv")).unwrap();
    // 2 models x 3 prompts, plus one re-ranked point per model
    let points = csv.lines().skip(1).filter(|l| !l.split(',').nth(1).is_some_and(|s| s == "iso-f1")).count();
    assert_eq!(points, 6 + 2, "{csv}");
    assert!(std::fs::read_to_string(p("plots/plot.svg")).unwrap().contains("<svg"));

    let recipe = run(&[
        "recipe",
        "run",
        "--example",
        "r1",
        "--dataset",
        s(&p("f.jsonl")),
        "--index",
        s(&p("i.json")),
        "--k1",
        "3",
        "--k2",
        "2",
    ]);
    let recipe: serde_json::Value = serde_json::from_slice(&recipe.stdout).unwrap();
    assert!(recipe.is_object());
}

#[test]
fn replay_misses_give_partial_and_backend_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_dataset(&p("d.jsonl"), 3);
    let grid = |extra: &[&str], models: &str, out: &str| {
        let (data, out) = (p("d.jsonl"), p(out));
        let mut args = vec!["--seed", "5"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&[
            "grid",
            "run",
            "--dataset",
            s(&data),
            "--out",
            s(&out),
            "--models",
            models,
            "--temperatures",
            "0",
            "--prompts",
            "golden",
        ]);
        attrib(&args)
    };

    let session = p("session.jsonl");
    assert_eq!(code(&grid(&["--backend", "mock", "--record", s(&session)], "S", "rec.jsonl")), 0);
    let replayed = grid(&["--backend", "replay", "--replay", s(&session)], "S", "rep.jsonl");
    assert_eq!(code(&replayed), 0, "{}", String::from_utf8_lossy(&replayed.stderr));
    // same calls, same recorded answers
    let strip = |f: &str| {
        let text = std::fs::read_to_string(p(f)).unwrap();
        text.lines().skip(1).map(str::to_owned).collect::<Vec<_>>()
    };
    assert_eq!(strip("rec.jsonl"), strip("rep.jsonl"));

    assert_eq!(code(&grid(&["--backend", "replay", "--replay", s(&session)], "S,M", "partial.jsonl")), 3);
    assert_eq!(code(&grid(&["--backend", "replay", "--replay", s(&session)], "M", "none.jsonl")), 2);
}
