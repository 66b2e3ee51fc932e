use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gramdiff(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gramdiff"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_suite(dir: &Path, suite: &Value) -> PathBuf {
    let path = dir.join("suite.json");
    std::fs::write(&path, serde_json::to_string_pretty(suite).unwrap()).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_owned(), v.to_owned())).collect()
        })
        .collect()
}

fn keyword_suite(campaigns: Value) -> Value {
    json!({
        "seed": 5,
        "output_dir": "out",
        "grammars": {"example": "builtin:example", "bad": "builtin:bad", "A": "builtin:A", "B": "builtin:B"},
        "classifiers": {
            "constant": {"type": "constant", "labels": ["A"]},
            "shooting": {"type": "keyword", "keywords": ["shot"], "hit": ["B"], "miss": ["A"]},
            "lex1": {"type": "lexicon", "entries": {"shot": ["VIOLENCE"], "saw": ["VISION"], "dog": ["PETS"], "cat": ["PETS"]}},
            "lex2": {"type": "lexicon", "entries": {"shot": ["SPORTS"], "saw": ["VISION"], "dog": ["PETS"], "cat": ["WILDLIFE"]}}
        },
        "campaigns": campaigns
    })
}

#[test]
fn suite_writes_parseable_artifacts_and_imp_matches_hand_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let suite = keyword_suite(json!([{
        "name": "cmp",
        "grammar": "example",
        "pair": ["constant", "shooting"],
        "threshold": 0.5,
        "strategy": ["directed", "no-backtrack", "random"],
        "iterations": 300,
        "repeat": 3
    }]));
    let path = write_suite(dir.path(), &suite);
    let o = gramdiff(&["run", path.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let out = dir.path().join("out");
    let summary = read_csv(&out.join("summary.csv"));
    assert_eq!(summary.len(), 9);
    for row in &summary {
        let stem = format!("cmp__example__J0.5__{}__r{}", row["strategy"], row["repeat"]);
        let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("runs/{stem}.json"))).unwrap()).unwrap();
        assert_eq!(report["n_err"].to_string(), row["n_err"]);
        let trace = std::fs::read_to_string(out.join(format!("runs/{stem}.jsonl"))).unwrap();
        let lines: Vec<Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 301);
        assert!(lines[0]["transition"].is_null());
    }

    // Paired runs share a seed per repetition.
    for rep in ["0", "1", "2"] {
        let seeds: std::collections::BTreeSet<&str> =
            summary.iter().filter(|r| r["repeat"] == rep).map(|r| r["seed"].as_str()).collect();
        assert_eq!(seeds.len(), 1);
    }

    let comparison = read_csv(&out.join("comparison.csv"));
    assert_eq!(comparison.len(), 4, "three repetitions plus the mean");
    for row in &comparison {
        let err_r = |s: &str| -> f64 {
            let v: Vec<f64> = summary
                .iter()
                .filter(|r| r["strategy"] == s && (row["repeat"] == "mean" || r["repeat"] == row["repeat"]))
                .map(|r| r["err_r"].parse().unwrap())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (d, n, r) = (err_r("directed"), err_r("no-backtrack"), err_r("random"));
        let imp: f64 = row["imp_directed_pct"].parse().unwrap();
        assert!((imp - (d - r) / r * 100.0).abs() < 0.01, "{row:?}");
        let imp: f64 = row["imp_no_backtrack_pct"].parse().unwrap();
        assert!((imp - (n - r) / r * 100.0).abs() < 0.01, "{row:?}");
    }
}

#[test]
fn reruns_and_parallelism_leave_traces_byte_identical() {
    let campaigns = json!([{
        "name": "det",
        "grammar": ["example", "A"],
        "pair": ["lex1", "lex2"],
        "threshold": [0.3, 0.6],
        "strategy": ["directed", "random"],
        "iterations": 200
    }]);
    let mut dumps = Vec::new();
    for parallelism in [1, 1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let mut suite = keyword_suite(campaigns.clone());
        suite["parallelism"] = json!(parallelism);
        let path = write_suite(dir.path(), &suite);
        assert!(gramdiff(&["run", path.to_str().unwrap()], dir.path()).status.success());
        let runs = dir.path().join("out/runs");
        let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        for e in std::fs::read_dir(&runs).unwrap() {
            let p = e.unwrap().path();
            files.insert(p.file_name().unwrap().to_string_lossy().into(), std::fs::read(&p).unwrap());
        }
        assert_eq!(files.len(), 16);
        dumps.push(files);
    }
    assert_eq!(dumps[0], dumps[1]);
    assert_eq!(dumps[0], dumps[2]);
}

#[test]
fn random_err_r_is_non_decreasing_in_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let suite = keyword_suite(json!([{
        "name": "sweep",
        "grammar": "example",
        "pair": ["lex1", "lex2"],
        "threshold": [0.05, 0.15, 0.3],
        "strategy": "random",
        "iterations": 500,
        "repeat": 4
    }]));
    let path = write_suite(dir.path(), &suite);
    assert!(gramdiff(&["run", path.to_str().unwrap()], dir.path()).status.success());
    let summary = read_csv(&dir.path().join("out/summary.csv"));
    for rep in ["0", "1", "2", "3"] {
        let mut by_j: Vec<(f64, f64)> = summary
            .iter()
            .filter(|r| r["repeat"] == rep)
            .map(|r| (r["J"].parse().unwrap(), r["err_r"].parse().unwrap()))
            .collect();
        by_j.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!(by_j.windows(2).all(|w| w[0].1 <= w[1].1), "repeat {rep}: {by_j:?}");
    }
}

#[test]
fn few_terminals_grammar_repeats_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let suite = keyword_suite(json!([{
        "name": "uniq",
        "grammar": ["bad", "A", "B"],
        "pair": ["constant", "shooting"],
        "threshold": 0.5,
        "strategy": "directed",
        "iterations": 100
    }]));
    let path = write_suite(dir.path(), &suite);
    assert!(gramdiff(&["run", path.to_str().unwrap()], dir.path()).status.success());
    for row in read_csv(&dir.path().join("out/summary.csv")) {
        let ratio: f64 = row["unique_ratio"].parse().unwrap();
        if row["grammar"] == "bad" {
            assert!(ratio <= 0.65, "{ratio}");
        } else {
            assert!(ratio >= 0.9, "{}: {ratio}", row["grammar"]);
        }
    }
}

#[test]
fn flags_override_seed_iterations_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let suite = keyword_suite(json!([{
        "name": "o", "grammar": "example", "pair": ["constant", "shooting"], "threshold": 0.5, "iterations": 1000
    }]));
    let path = write_suite(dir.path(), &suite);
    let o = gramdiff(
        &["run", path.to_str().unwrap(), "--seed", "9", "--iterations", "20", "--output-dir", "elsewhere"],
        dir.path(),
    );
    assert!(o.status.success());
    let summary = read_csv(&dir.path().join("elsewhere/summary.csv"));
    let trace = std::fs::read_to_string(dir.path().join("elsewhere/runs/o__example__J0.5__directed__r0.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert!(!dir.path().join("out").exists());

    let again = gramdiff(&["run", path.to_str().unwrap(), "--iterations", "20"], dir.path());
    assert!(again.status.success());
    assert_ne!(read_csv(&dir.path().join("out/summary.csv"))[0]["seed"], summary[0]["seed"]);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let base = json!([{"name": "c", "grammar": "example", "pair": ["constant", "shooting"], "threshold": 0.5, "iterations": 5}]);
    let mut cases = vec![keyword_suite(json!([])), keyword_suite(base.clone())];
    cases[1]["campaigns"][0]["threshold"] = json!(1.2);
    let mut unknown = keyword_suite(base.clone());
    unknown["campaigns"][0]["pair"] = json!(["constant", "ghost"]);
    cases.push(unknown);
    for suite in &cases {
        let path = write_suite(dir.path(), suite);
        let o = gramdiff(&["run", path.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    }
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(gramdiff(&["run", "broken.json"], dir.path()).status.code(), Some(2));
    assert_eq!(gramdiff(&["run", "missing.json"], dir.path()).status.code(), Some(2));
    assert_eq!(gramdiff(&["murq", "--threshold", "-0.1"], dir.path()).status.code(), Some(2));
}

#[test]
fn grammar_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("loop.cfg"), "S -> A\nA -> A \"x\"\n").unwrap();
    let base = json!([{"name": "c", "grammar": "g", "pair": ["constant", "shooting"], "threshold": 0.5, "iterations": 5}]);
    for reference in ["loop.cfg", "nowhere.cfg", "builtin:nope"] {
        let mut suite = keyword_suite(base.clone());
        suite["grammars"]["g"] = json!(reference);
        let path = write_suite(dir.path(), &suite);
        let o = gramdiff(&["run", path.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(3), "{reference}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = gramdiff(&["validate", "loop.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("non-productive"));
}

/// Answers `ok` requests with a label list, then 404 to everything.
fn flaky_server(ok: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/classify", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let (status, reply) = if n < ok { (200, r#"{"labels": ["A"]}"#) } else { (404, "gone") };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    url
}

#[test]
fn transport_failure_exits_4_and_keeps_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut suite = keyword_suite(json!([{
        "name": "remote", "grammar": "example", "pair": ["constant", "api"], "threshold": 0.5, "iterations": 200
    }]));
    suite["classifiers"]["api"] = json!({"type": "http", "url": flaky_server(30), "retries": 0, "timeout_ms": 2000});
    let path = write_suite(dir.path(), &suite);
    let o = gramdiff(&["run", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = read_csv(&dir.path().join("out/summary.csv"));
    assert_eq!(summary[0]["partial"], "true");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/runs/remote__example__J0.5__directed__r0.json")).unwrap())
            .unwrap();
    assert_eq!(report["partial"], json!(true));
    let trace = std::fs::read_to_string(dir.path().join("out/runs/remote__example__J0.5__directed__r0.jsonl")).unwrap();
    let n = trace.lines().count();
    // Repeated sentences are answered from the cache, so the trace can hold
    // more records than the server answered; it still stops short.
    assert!(n > 0 && n < 201, "{n} records");
}

#[test]
fn trained_model_saves_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let train = json!({"corpora": [{"grammar": "t1", "label": "G1", "count": 50}, {"grammar": "t2", "label": "G2", "count": 50}], "save": "nb.json"});
    let suite = json!({
        "grammars": {"t1": "builtin:toy1", "t2": "builtin:toy2", "toys": ["builtin:toy1", "builtin:toy2"]},
        "classifiers": {
            "trained": {"type": "naive_bayes", "train": train},
            "perc": {"type": "perceptron", "train": {"corpora": [{"grammar": "t1", "label": "G1", "count": 50}, {"grammar": "t2", "label": "G2", "count": 50}]}}
        },
        "campaigns": [{"name": "m", "grammar": "toys", "pair": ["trained", "perc"], "threshold": 0.5, "strategy": "random", "iterations": 100}]
    });
    let path = write_suite(dir.path(), &suite);
    assert!(gramdiff(&["run", path.to_str().unwrap()], dir.path()).status.success());
    assert!(dir.path().join("nb.json").exists());
    // No output_dir in the config: the default sits next to it.
    let first = std::fs::read_to_string(dir.path().join("gramdiff-out/summary.csv")).unwrap();

    let mut reload = suite.clone();
    reload["classifiers"]["trained"] = json!({"type": "naive_bayes", "model": "nb.json"});
    let path = write_suite(dir.path(), &reload);
    assert!(gramdiff(&["run", path.to_str().unwrap(), "--output-dir", "second"], dir.path()).status.success());
    let second = std::fs::read_to_string(dir.path().join("second/summary.csv")).unwrap();
    assert_eq!(first, second);

    // A naive Bayes file cannot stand in for a perceptron.
    reload["classifiers"]["perc"] = json!({"type": "perceptron", "model": "nb.json"});
    let path = write_suite(dir.path(), &reload);
    assert_eq!(gramdiff(&["run", path.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn murq_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramdiff(
        &[
            "murq", "--repetitions", "2", "--iterations", "100", "--train-per-label", "50",
            "--heldout-per-label", "50", "--fractions", "0,10,25", "--output-dir", "m",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("m/murq.csv"));
    let percents: Vec<&str> = rows.iter().map(|r| r["percent_added"].as_str()).collect();
    assert_eq!(percents, ["0", "10", "25"]);
    for col in ["mean_errors", "mean_added", "accuracy_oracle", "accuracy_retrained"] {
        assert!(rows[0][col].parse::<f64>().is_ok(), "{col}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m/murq.json")).unwrap()).unwrap();
    assert_eq!(report["repetitions"], 2);
    assert_eq!(report["rows"][0]["mean_added"], json!(0.0));
}

#[test]
fn gen_perturb_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramdiff(&["gen", "builtin:example", "-c", "5", "--seed", "3"], dir.path());
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(stdout(&gramdiff(&["gen", "builtin:example", "-c", "5", "--seed", "3"], dir.path())), stdout(&o));

    let o = gramdiff(&["perturb", "builtin:example", "--steps", "2"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let sentences: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("sentence: ")).collect();
    assert_eq!(sentences.len(), 3);
    for w in sentences.windows(2) {
        let (a, b): (Vec<&str>, Vec<&str>) = (w[0].split(' ').collect(), w[1].split(' ').collect());
        assert_eq!(a.len(), b.len());
        assert_eq!(a.iter().zip(&b).filter(|(x, y)| x != y).count(), 1);
    }

    std::fs::write(dir.path().join("ok.cfg"), "S -> A B\nA -> \"x\" | \"y\"\nB -> \"z\"\nC -> \"w\"\n").unwrap();
    let o = gramdiff(&["validate", "ok.cfg", "builtin:A"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("C is unreachable"), "{text}");
    assert!(text.contains("builtin:A: ok"));
}
