use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geocurate_gateway::mock::{MockFixture, MockServer};
use serde_json::Value;
use tempfile::TempDir;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/e2e")
}

/// A scratch copy of the end-to-end fixture with its own mock server.
struct Workspace {
    dir: TempDir,
    server: MockServer,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for entry in std::fs::read_dir(fixture_dir()).unwrap() {
            let entry = entry.unwrap();
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
        let server = MockServer::start(MockFixture::from_path(&dir.path().join("mock.json")).unwrap()).unwrap();
        Self { dir, server }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn run(&self, args: &[&str]) -> Output {
        geocurate(self.path(), Some(&self.server.url()), args)
    }

    /// Runs with `--config config.ini` prepended.
    fn run_cfg(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", "config.ini"];
        all.extend_from_slice(args);
        self.run(&all)
    }

    fn statuses(&self, out: &str) -> BTreeMap<String, String> {
        let text = std::fs::read_to_string(self.path().join(out).join("run-manifest.json")).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        doc["stages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| {
                (
                    s["stage"].as_str().unwrap().to_owned(),
                    s["status"].as_str().unwrap().to_owned(),
                )
            })
            .collect()
    }
}

fn geocurate(dir: &Path, mock_url: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geocurate"));
    cmd.current_dir(dir).args(args).env_remove("GEOCURATE_MOCK_URL");
    if let Some(url) = mock_url {
        cmd.env("GEOCURATE_MOCK_URL", url);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

#[test]
fn run_all_with_empty_config_lists_every_missing_entry() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.ini"), "").unwrap();
    let out = geocurate(dir.path(), None, &["--config", "empty.ini", "run-all"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for key in [
        "paths.roads",
        "paths.embeddings",
        "paths.profiles",
        "paths.clues",
        "paths.geotags",
        "paths.images",
        "paths.truth",
        "paths.out",
        "infer.endpoint",
    ] {
        assert!(err.contains(key), "{key} not reported in:\n{err}");
    }
}

#[test]
fn bad_config_values_exit_2_and_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.ini"),
        "[params]\ntau = lots\nthresholds_km = 1,x\n\n[endpoint.m]\nbase_url = ${GEOCURATE_UNSET_VAR}\n",
    )
    .unwrap();
    let out = geocurate(dir.path(), None, &["--config", "bad.ini", "--out", "o", "sample"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("tau"), "{err}");
    assert!(err.contains("thresholds_km"), "{err}");
    assert!(err.contains("GEOCURATE_UNSET_VAR"), "{err}");
}

#[test]
fn score_before_weights_names_the_producing_stage() {
    let ws = Workspace::new();
    let out = ws.run_cfg(&["score"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("weights.json"), "{err}");
    assert!(err.contains("geocurate weights"), "{err}");

    let out = ws.run_cfg(&["clues", "export-stage1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("geocurate clues filter"), "{}", stderr(&out));
}

#[test]
fn second_run_all_skips_every_stage() {
    let ws = Workspace::new();
    assert_ok(&ws.run_cfg(&["run-all"]));
    assert!(ws.statuses("out").values().all(|s| s == "ran"));
    let chat = ws.server.chat_requests();

    let again = ws.run_cfg(&["run-all"]);
    assert_ok(&again);
    let statuses = ws.statuses("out");
    assert_eq!(statuses.len(), 11);
    assert!(statuses.values().all(|s| s == "skipped"), "{statuses:?}");
    assert!(stderr(&again).contains("infer: skipped (inputs unchanged)"));
    assert_eq!(ws.server.chat_requests(), chat);

    let forced = ws.run_cfg(&["--force", "curate"]);
    assert_ok(&forced);
    assert_eq!(ws.statuses("out")["curate"], "ran");
}

#[test]
fn editing_a_kept_clue_reruns_only_the_clue_stages() {
    let ws = Workspace::new();
    assert_ok(&ws.run_cfg(&["run-all"]));

    let kept = std::fs::read_to_string(ws.path().join("out/clues/kept.jsonl")).unwrap();
    let first: Value = serde_json::from_str(kept.lines().next().unwrap()).unwrap();
    let id = first["id"].as_str().unwrap();
    let clues_path = ws.path().join("clues.jsonl");
    let edited: Vec<String> = std::fs::read_to_string(&clues_path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).unwrap();
            if v["id"] == id {
                let text = format!("{} Kerbs are painted.", v["text"].as_str().unwrap());
                v["text"] = Value::String(text);
            }
            v.to_string()
        })
        .collect();
    std::fs::write(&clues_path, edited.join("\n") + "\n").unwrap();

    assert_ok(&ws.run_cfg(&["run-all"]));
    let statuses = ws.statuses("out");
    let ran: Vec<&str> = statuses
        .iter()
        .filter(|(_, s)| *s == "ran")
        .map(|(k, _)| k.as_str())
        .collect();
    assert_eq!(ran, ["clues-filter", "clues-ingest", "export-stage1"]);
    assert_ok(&ws.run(&["--out", "out", "verify"]));
}

#[test]
fn verify_reports_a_modified_artifact() {
    let ws = Workspace::new();
    assert_ok(&ws.run_cfg(&["run-all"]));
    assert!(stdout(&ws.run(&["--out", "out", "verify"])).contains("11 stages verified"));

    std::fs::write(ws.path().join("out/curve.csv"), "tampered\n").unwrap();
    let out = ws.run(&["--out", "out", "verify"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("curve.csv"), "{}", stderr(&out));
}

#[test]
fn unreachable_endpoint_exits_4_and_suggests_retry() {
    let ws = Workspace::new();
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let out = geocurate(
        ws.path(),
        Some(&format!("http://127.0.0.1:{port}")),
        &["--config", "config.ini", "infer"],
    );
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("--retry-failed"), "{}", stderr(&out));

    // the failures are checkpointed; once the endpoint is back they are retried
    let out = ws.run_cfg(&["infer", "--retry-failed"]);
    assert_ok(&out);
    let preds = std::fs::read_to_string(ws.path().join("out/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 20);
    assert!(!preds.contains("\"transport\""));
}

#[test]
fn limited_infer_stops_with_a_resume_hint() {
    let ws = Workspace::new();
    let out = ws.run_cfg(&["infer", "--limit", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("rerun to resume"), "{}", stderr(&out));
    assert!(!ws.path().join("out/predictions.jsonl").exists());
    assert_ok(&ws.run_cfg(&["infer"]));
    assert_eq!(
        ws.server.requests_for("https://images.example/e001.jpg"),
        1,
        "finished image was queried again"
    );
}

#[test]
fn endpoint_tagger_matches_gazetteer_tagger() {
    let ws = Workspace::new();
    assert_ok(&ws.run_cfg(&["--out", "a", "clues", "ingest"]));
    assert_ok(&ws.run_cfg(&["--out", "a", "clues", "filter"]));
    assert_ok(&ws.run_cfg(&["--out", "b", "clues", "ingest"]));
    let tagger = format!("endpoint:{}/tag", ws.server.url());
    assert_ok(&ws.run_cfg(&["--out", "b", "clues", "filter", "--tagger", &tagger]));
    assert!(ws.server.tagger_requests() > 0);
    for rel in ["clues/kept.jsonl", "clues/dropped.jsonl"] {
        let a = std::fs::read(ws.path().join("a").join(rel)).unwrap();
        let b = std::fs::read(ws.path().join("b").join(rel)).unwrap();
        assert_eq!(a, b, "{rel}");
    }
}

#[test]
fn eval_flags_override_the_config() {
    let ws = Workspace::new();
    assert_ok(&ws.run_cfg(&["run-all"]));
    let out = ws.run_cfg(&[
        "--out",
        "again",
        "eval",
        "--preds",
        "out/predictions.jsonl",
        "--thresholds",
        "5,50",
    ]);
    assert_ok(&out);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path().join("again/report.json")).unwrap()).unwrap();
    let thresholds: Vec<f64> = report["threshold_accuracy"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["threshold_km"].as_f64().unwrap())
        .collect();
    assert_eq!(thresholds, [5.0, 50.0]);
    assert_eq!(report["counts"]["total"], 20);
    assert!(!stdout(&out).is_empty());
}

#[test]
fn report_with_runs_writes_an_ablation_table() {
    let ws = Workspace::new();
    assert_ok(&ws.run_cfg(&["run-all"]));
    let out = ws.run(&[
        "--out",
        "ablation",
        "report",
        "--run",
        "first=out/report.json",
        "--run",
        "second=out/report.json",
    ]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(ws.path().join("ablation/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.contains("first") && csv.contains("second"));
    assert!(ws.path().join("ablation/ablation.txt").is_file());

    let bad = ws.run(&["report", "--run", "no-equals-sign"]);
    assert_eq!(bad.status.code(), Some(2));
}
