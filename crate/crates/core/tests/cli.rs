use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn amlgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amlgraph"))
        .args(args)
        .env_remove("AMLGRAPH_WORKERS")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, seed: &str) -> PathBuf {
        let (t, l) = (self.path("t.csv"), self.path("l.csv"));
        ok(amlgraph(&["synth", "--seed", seed, "--out", p(&t), "--labels", p(&l)]));
        t
    }
}

#[test]
fn stage_composition_matches_one_shot_pipeline() {
    let ws = Workspace::new();
    let t = ws.synth("7");
    let (one_shot, snap, assign, staged) =
        (ws.path("one.json"), ws.path("g.snap"), ws.path("a.csv"), ws.path("staged.json"));
    ok(amlgraph(&["pipeline", "--input", p(&t), "--out", p(&one_shot)]));
    ok(amlgraph(&["ingest", "--input", p(&t), "--out", p(&snap)]));
    ok(amlgraph(&["detect", "--graph", p(&snap), "--out", p(&assign)]));
    ok(amlgraph(&[
        "score",
        "--graph",
        p(&snap),
        "--input",
        p(&t),
        "--assignment",
        p(&assign),
        "--out",
        p(&staged),
    ]));
    let (a, b) = (std::fs::read(&one_shot).unwrap(), std::fs::read(&staged).unwrap());
    assert!(!a.is_empty());
    assert!(a == b, "staged report differs from the one-shot report");
}

#[test]
fn report_is_identical_across_worker_counts() {
    let ws = Workspace::new();
    let t = ws.synth("3");
    let mut reports = Vec::new();
    for workers in ["1", "4", "8"] {
        let out = ws.path(&format!("r{workers}.json"));
        ok(amlgraph(&["pipeline", "--input", p(&t), "--out", p(&out), "--workers", workers]));
        reports.push(std::fs::read(&out).unwrap());
    }
    assert!(reports.windows(2).all(|w| w[0] == w[1]));

    // the environment variable reaches the same code path
    let env_out = ws.path("env.json");
    let status = Command::new(env!("CARGO_BIN_EXE_amlgraph"))
        .args(["pipeline", "--input", p(&t), "--out", p(&env_out)])
        .env("AMLGRAPH_WORKERS", "2")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(&env_out).unwrap(), reports[0]);
}

#[test]
fn synth_is_deterministic() {
    let ws = Workspace::new();
    let mut files = Vec::new();
    for run in 0..2 {
        let (t, l) = (ws.path(&format!("t{run}.csv")), ws.path(&format!("l{run}.csv")));
        ok(amlgraph(&["synth", "--seed", "42", "--out", p(&t), "--labels", p(&l)]));
        files.push((std::fs::read(&t).unwrap(), std::fs::read(&l).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let header = String::from_utf8_lossy(&files[0].0).lines().next().unwrap().to_string();
    assert_eq!(header, "txn_id,src,dst,amount,timestamp");
}

#[test]
fn pipeline_writes_every_artifact() {
    let ws = Workspace::new();
    let t = ws.synth("5");
    let names = ["r.json", "r.csv", "e.csv", "a.csv", "g.dot", "g.snap", "log.json"];
    let paths: Vec<PathBuf> = names.iter().map(|n| ws.path(n)).collect();
    ok(amlgraph(&[
        "pipeline",
        "--input",
        p(&t),
        "--out",
        p(&paths[0]),
        "--csv",
        p(&paths[1]),
        "--edges",
        p(&paths[2]),
        "--assignment",
        p(&paths[3]),
        "--dot",
        p(&paths[4]),
        "--snapshot",
        p(&paths[5]),
        "--run-log",
        p(&paths[6]),
    ]));
    for path in &paths {
        assert!(std::fs::metadata(path).unwrap().len() > 0, "{} is empty", path.display());
    }
    let log: serde_json::Value = serde_json::from_slice(&std::fs::read(&paths[6]).unwrap()).unwrap();
    assert!(log["transactions"].as_u64().unwrap() > 0);
    assert!(std::fs::read_to_string(&paths[4]).unwrap().starts_with("digraph"));
}

#[test]
fn empty_post_filter_graph_is_not_an_error() {
    let ws = Workspace::new();
    let t = ws.path("tiny.csv");
    std::fs::write(&t, "txn_id,src,dst,amount,timestamp\n1,a,b,10.00,100\n2,b,c,5.00,200\n3,c,a,1.00,300\n").unwrap();
    let out_path = ws.path("r.json");
    let out = ok(amlgraph(&["pipeline", "--input", p(&t), "--out", p(&out_path)]));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(report["communities"].as_array().unwrap().len(), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no MCS passed the filters"));
}

#[test]
fn suggest_thresholds_writes_curves() {
    let ws = Workspace::new();
    let t = ws.synth("11");
    let (snap, curves) = (ws.path("g.snap"), ws.path("curves.csv"));
    ok(amlgraph(&["ingest", "--input", p(&t), "--out", p(&snap)]));
    let out = ok(amlgraph(&["suggest-thresholds", "--graph", p(&snap), "--out", p(&curves)]));
    let suggested: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["v_min", "v_max", "d_hub", "n_hub_min"] {
        assert!(suggested[key].is_u64(), "missing {key}");
    }
    let text = std::fs::read_to_string(&curves).unwrap();
    assert_eq!(text.lines().next(), Some("curve,threshold,value,second_diff"));
    for name in ["v_remain", "m_remain", "v_avg_r"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "no {name} rows");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(amlgraph(&["pipeline", "--bogus"]).status.code(), Some(2));
    assert_eq!(amlgraph(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(amlgraph(&["detect"]).status.code(), Some(2));
    assert_eq!(amlgraph(&["--help"]).status.code(), Some(0));
}

#[test]
fn stage_failures_exit_1_with_stage_tag() {
    let ws = Workspace::new();
    let out = amlgraph(&["pipeline", "--input", p(&ws.path("missing.csv")), "--out", p(&ws.path("r.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: ingest:"));

    let bad = ws.path("bad.json");
    std::fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    let t = ws.synth("1");
    let out = amlgraph(&["pipeline", "--input", p(&t), "--out", p(&ws.path("r.json")), "--config", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));

    let out = amlgraph(&["detect", "--graph", p(&t), "--out", p(&ws.path("a.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: detect:"));
}
