mod support;

use std::fs;
use std::time::Duration;

use serde_json::{json, Value};

use support::{fixture, pipeline_fixture, run, stderr, stdout, Guard};

fn post(url: &str, body: &Value) -> Value {
    ureq::post(url).send_json(body).unwrap().body_mut().read_json().unwrap()
}

fn get(url: &str) -> Value {
    ureq::get(url).call().unwrap().body_mut().read_json().unwrap()
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn judge_doubling_program() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("judge.json");
    let out = run(&[
        "judge",
        "--solution",
        path(&fixture("judge/double.py")),
        "--suite",
        path(&fixture("judge/suite.json")),
        "--out",
        path(&record),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("passed: 1/1"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("0 ") && l.contains("Pass")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("Wrong Answer") && l.ends_with('0')), "{text}");
    let saved: Value = serde_json::from_slice(&fs::read(&record).unwrap()).unwrap();
    assert_eq!(saved["verdicts"], json!(["Pass"]));
    assert_eq!(saved["reward"]["value"], json!(5.0));
    // Records never reach stdout.
    assert!(!text.contains('{'));
}

#[test]
fn judge_tallies_failures_and_reward_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let mixed = dir.path().join("mixed.json");
    let out = run(&[
        "judge",
        "--solution",
        path(&fixture("judge/double.py")),
        "--suite",
        path(&fixture("judge/mixed_suite.json")),
        "--out",
        path(&mixed),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("passed: 2/3"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("Wrong Answer") && l.ends_with('1')), "{text}");

    let prose = dir.path().join("prose.json");
    let out = run(&[
        "judge",
        "--response",
        "--solution",
        path(&fixture("judge/prose.txt")),
        "--suite",
        path(&fixture("judge/mixed_suite.json")),
        "--out",
        path(&prose),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).lines().any(|l| l.starts_with("No Code Block") && l.ends_with('3')));

    for (file, want) in [(&mixed, "3.3333333333333335"), (&prose, "-2")] {
        let rewards = dir.path().join("rewards.json");
        let out = run(&["reward", path(file), "--out", path(&rewards)]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains(want), "{}", stdout(&out));
        let saved: Value = serde_json::from_slice(&fs::read(&rewards).unwrap()).unwrap();
        assert_eq!(saved[0]["reward"].to_string(), if want == "-2" { "-2.0" } else { want });
    }
}

#[test]
fn gen_tests_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("gen/spec.json");
    let digest = |out: &std::process::Output| {
        stdout(out).lines().find_map(|l| l.strip_prefix("digest: ").map(str::to_string)).unwrap()
    };
    let a = run(&["gen-tests", path(&spec), path(&dir.path().join("a"))]);
    let b = run(&["gen-tests", path(&spec), path(&dir.path().join("b"))]);
    assert!(a.status.success() && b.status.success(), "{}", stderr(&a));
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(support::snapshot(&dir.path().join("a")), support::snapshot(&dir.path().join("b")));
    assert_eq!(fs::read_dir(dir.path().join("a")).unwrap().count(), 4);

    // A different seed changes the corpus.
    let c = run(&["gen-tests", path(&spec), path(&dir.path().join("c")), "--seed", "12"]);
    assert_ne!(digest(&a), digest(&c));

    // Refuses to mix with an existing corpus unless forced.
    let again = run(&["gen-tests", path(&spec), path(&dir.path().join("a"))]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"));
    let forced = run(&["gen-tests", path(&spec), path(&dir.path().join("c")), "--force"]);
    assert!(forced.status.success());
    assert_eq!(digest(&forced), digest(&a));
}

#[test]
fn verify_overfitter_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let task_dir = fixture("overfitter");
    let bundle = dir.path().join("bundle.json");
    let out = run(&["verify", path(&task_dir), "--out", path(&bundle)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("decision:   DiscardedHoldoutMismatch"), "{}", stdout(&out));
    let saved: Value = serde_json::from_slice(&fs::read(&bundle).unwrap()).unwrap();
    assert_eq!(saved["decision"], "DiscardedHoldoutMismatch");
    assert_eq!(saved["validation_correct"], json!([0, 4]));

    let out = run(&["verify", path(&task_dir), "--mode", "relaxed", "--epsilon", "0.2", "--out", path(&bundle)]);
    assert!(stdout(&out).contains("decision:   Accepted"), "{}", stdout(&out));
    let saved: Value = serde_json::from_slice(&fs::read(&bundle).unwrap()).unwrap();
    assert_eq!(saved["golden_index"], 1);

    // Settings can come from a config file; flags win.
    let config = dir.path().join("verify.json");
    fs::write(&config, r#"{"mode": {"mode": "relaxed", "epsilon": 0.2}, "weighting": "size"}"#).unwrap();
    let out = run(&["verify", path(&task_dir), "--config", path(&config)]);
    assert!(stdout(&out).contains("decision:   Accepted"));
    let out = run(&["verify", path(&task_dir), "--config", path(&config), "--mode", "strict"]);
    assert!(stdout(&out).contains("decision:   DiscardedHoldoutMismatch"));
}

#[test]
fn verify_votes_a_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let task_dir = dir.path().join("task");
    support::write(
        &task_dir.join("task.json"),
        r#"{"task_id": "sum", "style": "Codeforces", "statement": "Print the sum of the integers on the second line."}"#,
    );
    let spec = fixture("gen/spec.json");
    // Only the sequence-shaped cases fit this task.
    let text = fs::read_to_string(&spec).unwrap();
    let mut spec_value: Value = serde_json::from_str(&text).unwrap();
    spec_value["cases"] = json!([spec_value["cases"][0], spec_value["cases"][1],
        {"label": "nominal_02", "recipe": [{"let": {"name": "n", "value": [5, 9]}},
                                           {"line": {"values": ["n"]}},
                                           {"sequence": {"length": "n", "min": 0, "max": 9}}]},
        {"label": "nominal_03", "recipe": [{"line": {"values": [3]}}, {"text": {"value": "4 5 6"}}]}]);
    support::write(&task_dir.join("generator.json"), &spec_value.to_string());
    let good = "import sys\nd = sys.stdin.read().split()\nprint(sum(map(int, d[1:])))";
    for (name, code) in [("0.txt", good), ("1.txt", good), ("2.txt", "print(0)")] {
        support::write(&task_dir.join("candidates").join(name), &format!("```python\n{code}\n```\n"));
    }
    support::write(&task_dir.join("proxy.txt"), &format!("```python\n{good}\n```\n"));
    let out = run(&["verify", path(&task_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("decision:   Accepted"), "{text}");
    assert!(text.contains("proxy:      2/2 (100)"), "{text}");
}

#[test]
fn usage_errors_exit_two() {
    let cases: &[&[&str]] = &[
        &[],
        &["frobnicate"],
        &["judge", "--suite", "x.json"],
        &["verify", "dir", "--epsilon", "0.2"],
        &["verify", "dir", "--mode", "relaxed", "--epsilon", "1.5"],
        &["verify", "dir", "--mode", "lenient"],
        &["work", "--broker", "mem"],
        &["work", "--broker", "redis://127.0.0.1:1", "--parallelism", "0"],
        &["serve", "--broker", "mem", "--workers", "0"],
        &["judge", "--solution", "a", "--suite", "b", "--wall-ms", "0"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn operational_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let cases: Vec<Vec<String>> = vec![
        vec!["judge".into(), "--solution".into(), path(&fixture("judge/double.py")).into(), "--suite".into(), path(&missing).into()],
        vec!["verify".into(), path(dir.path()).into()],
        vec!["reward".into(), path(&fixture("judge/suite.json")).into()],
        vec!["report".into(), path(dir.path()).into()],
        vec!["pipeline".into(), "--config".into(), path(&missing).into(), "--out".into(), path(dir.path()).into()],
        vec!["gen-tests".into(), path(&missing).into(), path(dir.path()).into()],
        vec!["work".into(), "--broker".into(), "redis://127.0.0.1:1".into()],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error: "), "{}", stderr(&out));
        assert!(stdout(&out).is_empty(), "{args:?} wrote to stdout");
    }
}

#[test]
fn pipeline_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path(), 5, 3);
    let out_dir = dir.path().join("out");
    let out = run(&["pipeline", "--config", path(&config), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("task-04"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("Accepted") && l.ends_with('4')), "{text}");
    assert!(text.lines().any(|l| l.starts_with("DiscardedUnsolvable") && l.ends_with('1')), "{text}");
    assert!(out_dir.join("report.json").exists());

    let out = run(&["report", path(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("discard fraction ") && l.ends_with("0.2000")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("100 ") && l.ends_with('4')), "{text}");
    assert!(text.lines().any(|l| l.starts_with("0 ") && l.ends_with('1')), "{text}");

    // A bare corpus directory tallies the accepted bundles.
    let out = run(&["report", path(&out_dir.join("corpus"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("bundles: 4"), "{}", stdout(&out));

    // Overriding the mode reaches the run.
    let strict_out = dir.path().join("relaxed");
    let out = run(&[
        "pipeline", "--config", path(&config), "--out", path(&strict_out), "--mode", "relaxed", "--epsilon", "0.25",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&fs::read(strict_out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["mode"], json!({"mode": "relaxed", "epsilon": 0.25}));
}

#[test]
fn pipeline_reports_failed_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let config = pipeline_fixture(dir.path(), 2, 3);
    fs::remove_file(dir.path().join("replies/task-01/candidate-2.txt")).unwrap();
    let out = run(&["pipeline", "--config", path(&config), "--out", path(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("1 of 2 tasks failed"), "{}", stderr(&out));
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn serve_in_memory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.jsonl");
    let (server, mut lines) = Guard::spawn(&[
        "serve",
        "--bind",
        "127.0.0.1:0",
        "--workers",
        "2",
        "--audit",
        path(&audit),
        "--granularity",
        "case",
    ]);
    let (url, banner) = support::read_until(&mut lines, "listening:");
    assert!(banner.iter().any(|l| l == "workers:   2"), "{banner:?}");

    let health = get(&format!("{url}/v1/healthz"));
    assert_eq!(health["status"], "ok");
    let body = json!({"requests": [
        {"solution": {"code": "print(int(input()) * 2)"},
         "suite": [{"input": "21\n", "expected": "42"}, {"input": "2\n", "expected": "5"}]},
        {"solution": {"raw_response": "no code here"}, "suite": [{"input": "1\n", "expected": "2"}]}
    ]});
    let reply = post(&format!("{url}/v1/jobs"), &body);
    let ids: Vec<String> = serde_json::from_value(reply["job_ids"].clone()).unwrap();
    assert_eq!(ids.len(), 2);
    let first = get(&format!("{url}/v1/jobs/{}?timeout_ms=20000", ids[0]));
    assert_eq!(first["verdicts"], json!(["Pass", "WrongAnswer"]));
    assert_eq!(first["reward"]["value"], json!(2.5));
    let second = get(&format!("{url}/v1/jobs/{}?timeout_ms=20000", ids[1]));
    assert_eq!(second["reward"]["value"], json!(-2.0));
    let workers = get(&format!("{url}/v1/workers"));
    assert_eq!(workers["workers"].as_array().unwrap().len(), 2);

    let status = server.terminate();
    assert!(status.success(), "{status:?}");

    let out = run(&["reward", path(&audit)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("2.5"), "{text}");
    assert!(text.contains("-2"), "{text}");
}

#[test]
fn serve_with_store_and_external_workers() {
    let (server, mut lines) = Guard::spawn(&[
        "serve",
        "--bind",
        "127.0.0.1:0",
        "--embedded-store",
        "127.0.0.1:0",
        "--lease-ttl-ms",
        "1000",
        "--sweep-ms",
        "200",
    ]);
    let (store, _) = support::read_until(&mut lines, "store:");
    let (url, banner) = support::read_until(&mut lines, "listening:");
    assert!(banner.iter().any(|l| l == "workers:   0"), "{banner:?}");

    let (workers, mut wlines) =
        Guard::spawn(&["work", "--broker", &store, "--parallelism", "2", "--id", "ext", "--lease-ttl-ms", "1000"]);
    let (started, _) = support::read_until(&mut wlines, "workers:");
    assert!(started.starts_with("2 on redis://"), "{started}");

    let body = json!({"requests": [{"solution": {"code": "print(int(input()) + 1)"},
                                    "suite": [{"input": "41\n", "expected": "42"}]}]});
    let reply = post(&format!("{url}/v1/jobs"), &body);
    let id = reply["job_ids"][0].as_str().unwrap().to_string();
    let result = get(&format!("{url}/v1/jobs/{id}?timeout_ms=20000"));
    assert_eq!(result["reward"]["value"], json!(5.0));
    let listed = get(&format!("{url}/v1/workers"));
    let mut ids: Vec<String> =
        listed["workers"].as_array().unwrap().iter().map(|w| w["worker_id"].as_str().unwrap().to_string()).collect();
    ids.sort();
    assert_eq!(ids, ["ext-0", "ext-1"]);

    // A killed worker process drops out of the listing.
    workers.kill();
    let deadline = std::time::Instant::now() + Duration::from_secs(10);
    loop {
        let listed = get(&format!("{url}/v1/workers"));
        if listed["workers"].as_array().unwrap().is_empty() {
            break;
        }
        assert!(std::time::Instant::now() < deadline, "{listed}");
        std::thread::sleep(Duration::from_millis(100));
    }
    assert!(server.terminate().success());
}

#[test]
fn work_stops_cleanly_and_reports() {
    let store = codeverif_broker::StoreServer::start("127.0.0.1:0").unwrap();
    let (workers, mut lines) = Guard::spawn(&["work", "--broker", &store.url(), "--id", "solo"]);
    support::read_until(&mut lines, "workers:");
    let status = workers.terminate();
    assert!(status.success(), "{status:?}");
    let rest: Vec<String> = std::io::BufRead::lines(lines).map(Result::unwrap).collect();
    assert!(rest.iter().any(|l| l.starts_with("solo-0")), "{rest:?}");
}
