use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn greenflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greenflow")).args(args).env_remove("GREENFLOW_SEED").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

struct Fixture {
    _dir: TempDir,
    workflow: String,
    cluster: String,
    profile: String,
}

/// One processor of speed 1 and the given task works, all independent, with
/// a zero budget on [0, 20).
fn fixture(works: &[f64]) -> Fixture {
    let dir = TempDir::new().unwrap();
    let tasks: Vec<Value> = works.iter().enumerate().map(|(i, w)| json!({"id": i + 1, "work": w})).collect();
    let workflow = write(dir.path(), "workflow.json", &json!({"tasks": tasks}));
    let cluster = write(
        dir.path(),
        "cluster.json",
        &json!({"processors": [{"id": 0, "speed": 1.0, "idle_power": 1.0, "work_power": 2.0}], "channels": []}),
    );
    let profile =
        write(dir.path(), "profile.json", &json!({"intervals": [{"begin": 0.0, "end": 20.0, "budget": 0.0}]}));
    Fixture { _dir: dir, workflow, cluster, profile }
}

impl Fixture {
    fn args<'a>(&'a self, extra: &[&'a str]) -> Vec<&'a str> {
        let mut v = vec!["--workflow", &self.workflow, "--cluster", &self.cluster, "--profile", &self.profile];
        v.extend_from_slice(extra);
        v
    }
}

#[test]
fn heft_sl_on_single_task_prints_schedule() {
    let f = fixture(&[4.0]);
    let mut args = vec!["schedule", "--algo", "heft-sl"];
    args.extend(f.args(&["--deadline", "10"]));
    let o = greenflow(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = stdout_json(&o);
    assert_eq!(doc["mapping"]["1"], 0);
    assert_eq!(doc["items"][0]["start"], 0.0);
    assert_eq!(doc["items"][0]["duration"], 4.0);
}

#[test]
fn cwm_below_heft_makespan_exits_infeasible() {
    let f = fixture(&[4.0]);
    let mut args = vec!["schedule", "--algo", "cwm"];
    args.extend(f.args(&["--deadline", "3"]));
    let o = greenflow(&args);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible deadline"));
}

#[test]
fn evaluate_reports_overlap_and_succeeds() {
    let f = fixture(&[2.0, 3.0]);
    let dir = TempDir::new().unwrap();
    let schedule = write(
        dir.path(),
        "schedule.json",
        &json!({
            "mapping": {"1": 0, "2": 0},
            "items": [
                {"entity": {"task": 1}, "resource": {"proc": 0}, "start": 0.0, "duration": 2.0},
                {"entity": {"task": 2}, "resource": {"proc": 0}, "start": 1.0, "duration": 3.0}
            ]
        }),
    );
    let mut args = vec!["evaluate", "--schedule", &schedule];
    args.extend(f.args(&["--deadline", "10"]));
    let o = greenflow(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["valid"], false);
    let violations = report["violations"].as_array().unwrap();
    assert!(!violations.is_empty());
    assert_eq!(violations[0]["kind"], "processor-overlap");
    assert!(report["carbon"]["total_cost"].is_number());
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = greenflow(&["schedule", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let o = greenflow(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("schedule"));
}

#[test]
fn missing_input_file_exits_one() {
    let o = greenflow(&[
        "schedule",
        "--algo",
        "cwm",
        "--workflow",
        "/nonexistent.json",
        "--cluster",
        "/nonexistent.json",
        "--profile",
        "/nonexistent.json",
        "--deadline",
        "5",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn fixture3p_writes_instance_and_prints_deadline() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = greenflow(&["gen", "fixture3p", "--integers", "1,1,4,2,2,2", "--bin", "6", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "13");
    let profile: Value = serde_json::from_slice(&fs::read(dir.path().join("profile.json")).unwrap()).unwrap();
    assert_eq!(profile["intervals"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("workflow.json").exists());
    assert!(dir.path().join("cluster.json").exists());
}

/// Builds a generated instance through the `gen` subcommands.
fn generated(dir: &Path) -> (String, String, String) {
    let nodes = write(
        dir,
        "nodes.json",
        &json!([
            {"speed": 1.0, "idle_power": 60.0, "work_power": 120.0},
            {"speed": 2.0, "idle_power": 100.0, "work_power": 260.0},
            {"speed": 4.0, "idle_power": 160.0, "work_power": 560.0}
        ]),
    );
    let path = |name: &str| dir.join(name).to_str().unwrap().to_owned();
    let (cluster, workflow, profile) = (path("cluster.json"), path("workflow.json"), path("profile.json"));
    let steps: [Vec<&str>; 3] = [
        vec!["gen", "cluster", "--nodes", &nodes, "--copies", "2", "--seed", "3", "--out", &cluster],
        vec![
            "gen",
            "workflow",
            "--tasks",
            "40",
            "--layers",
            "8",
            "--cluster",
            &cluster,
            "--seed",
            "4",
            "--out",
            &workflow,
        ],
        vec![
            "gen",
            "profile",
            "--cluster",
            &cluster,
            "--synthetic",
            "500",
            "--horizon",
            "400",
            "--seed",
            "5",
            "--out",
            &profile,
        ],
    ];
    for args in &steps {
        let o = greenflow(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    (workflow, cluster, profile)
}

#[test]
fn schedule_output_revalidates_through_evaluate() {
    let dir = TempDir::new().unwrap();
    let (workflow, cluster, profile) = generated(dir.path());
    let files = ["--workflow", &workflow, "--cluster", &cluster, "--profile", &profile];
    for algo in ["heft-sl", "cwm"] {
        let out = dir.path().join(format!("{algo}.json"));
        let out = out.to_str().unwrap();
        let mut args = vec!["schedule", "--algo", algo, "--alpha", "2", "--seed", "7", "--out", out];
        args.extend(files);
        let o = greenflow(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

        let doc: Value = serde_json::from_slice(&fs::read(out).unwrap()).unwrap();
        let makespan = doc["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|it| it["start"].as_f64().unwrap() + it["duration"].as_f64().unwrap())
            .fold(0.0, f64::max);
        let deadline = format!("{}", makespan.max(1.0));
        let mut args = vec!["evaluate", "--schedule", out, "--deadline", &deadline];
        args.extend(files);
        let o = greenflow(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let report = stdout_json(&o);
        assert_eq!(report["valid"], true, "{algo}: {report}");
        assert!(report["violations"].as_array().unwrap().is_empty());
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let (workflow, cluster, profile) = generated(dir.path());
    let run = |env_seed: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_greenflow"));
        cmd.args(["schedule", "--algo", "cwm", "--alpha", "1.5"])
            .args(["--workflow", &workflow, "--cluster", &cluster, "--profile", &profile])
            .env_remove("GREENFLOW_SEED");
        if let Some(s) = env_seed {
            cmd.env("GREENFLOW_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        let o = cmd.output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let by_env = run(Some("11"), None);
    assert_eq!(by_env, run(None, Some("11")));
    assert_eq!(by_env, run(Some("11"), None));
    assert_eq!(run(Some("3"), Some("11")), by_env);
}

#[test]
fn deadline_wins_over_alpha_with_warning() {
    let f = fixture(&[4.0]);
    let mut args = vec!["schedule", "--algo", "heft-sl"];
    args.extend(f.args(&["--deadline", "10", "--alpha", "2"]));
    let o = greenflow(&args);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("warning") && err.contains("deadline 10"), "{err}");
}

#[test]
fn params_file_is_overridden_by_flags() {
    let f = fixture(&[4.0]);
    let dir = TempDir::new().unwrap();
    let params = write(dir.path(), "params.json", &json!({"tau": 2.0, "phi": 10}));
    let mut args = vec!["schedule", "--algo", "cwm", "--params", &params];
    args.extend(f.args(&["--deadline", "10"]));
    assert_eq!(code(&greenflow(&args)), 1, "tau 2.0 is rejected");
    args.extend(["--tau", "0.5"]);
    assert_eq!(code(&greenflow(&args)), 0);
}

fn matrix(dir: &Path) -> PathBuf {
    let instance = |k: u64| {
        json!({
            "id": format!("w{k}"),
            "cluster": {"nodes": [
                {"speed": 1.0, "idle_power": 60.0, "work_power": 120.0},
                {"speed": 3.0, "idle_power": 130.0, "work_power": 420.0}
            ], "copies": 2, "seed": 1},
            "workflow": {"tasks": 30, "layers": 6, "density": 0.3, "seed": k},
            "profile": {
                "intensity": {"synthetic": {"len": 400, "seed": k}},
                "len_range": [5, 20],
                "dyn_fraction": 0.3,
                "seed": k
            }
        })
    };
    let doc = json!({"alphas": [1.5, 2.0], "seeds": [0, 1], "instances": [instance(1), instance(2)]});
    PathBuf::from(write(dir, "matrix.json", &doc))
}

#[test]
fn bench_and_profile_curve_end_to_end() {
    let dir = TempDir::new().unwrap();
    let m = matrix(dir.path());
    let m = m.to_str().unwrap();
    let results = dir.path().join("results.csv");
    let results = results.to_str().unwrap();
    let again = dir.path().join("again.csv");
    let again = again.to_str().unwrap();
    for (out, jobs) in [(results, "1"), (again, "3")] {
        let o = greenflow(&["bench", "--matrix", m, "--out", out, "--jobs", jobs, "--no-timing"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!Path::new(&format!("{out}.partial")).exists());
    }
    let text = fs::read_to_string(results).unwrap();
    assert_eq!(text, fs::read_to_string(again).unwrap());
    assert!(text.starts_with("instance_id,algorithm,alpha,deadline,carbon_cost,makespan,feasible,wall_time_s,seed\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);

    let curve = dir.path().join("curve.csv");
    let curve = curve.to_str().unwrap();
    let o =
        greenflow(&["profile-curve", "--results", results, "--out", curve, "--points", "5", "--reference", "heft-sl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["reference"], "heft-sl");
    let curve = fs::read_to_string(curve).unwrap();
    assert!(curve.starts_with("algorithm,delta,fraction\n"));
    assert!(curve.lines().skip(1).all(|l| l.starts_with("cwm,") || l.starts_with("heft-sl,")));
}

#[test]
fn bench_merges_competitor_results() {
    let dir = TempDir::new().unwrap();
    let m = matrix(dir.path());
    let competitor = dir.path().join("competitor.csv");
    fs::write(
        &competitor,
        "instance_id,algorithm,alpha,deadline,carbon_cost,makespan,feasible,wall_time_s,seed\n\
         w1,external,1.5,10,0,5,true,0.1,0\n",
    )
    .unwrap();
    let out = dir.path().join("results.json");
    let o = greenflow(&[
        "bench",
        "--matrix",
        m.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--import-competitor",
        competitor.to_str().unwrap(),
        "--no-timing",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 17);
    assert!(rows.iter().any(|r| r["algorithm"] == "external"));
}
