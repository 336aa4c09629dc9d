//! Exit-code and artifact contract of the `modalflow` binary:
//! 0 success, 1 input error, 2 nonconvergence with reports still written.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modalflow::generators::CHENGDU_SCENARIO_JSON;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modalflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_chengdu(dir: &Path) -> PathBuf {
    let path = dir.join("chengdu.json");
    std::fs::write(&path, CHENGDU_SCENARIO_JSON).unwrap();
    path
}

fn read_csv_column(path: &Path, column: usize) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| line.split(',').nth(column).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn equilibrium_writes_reports_and_matches_published_flows() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let out = dir.path().join("eq");
    let result = run(&[
        "equilibrium",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let flows = read_csv_column(&out.join("equilibrium.csv"), 1);
    let expected = [32.16, 12.10, 12.09, 5.09, 7.63, 0.09, 0.09, 0.01, 0.64, 12.13, 12.13, 11.50];
    for (f, e) in flows.iter().zip(&expected) {
        assert!((f - e).abs() < 0.05, "{f} vs {e}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,delta_f\n"));
}

#[test]
fn equilibrium_accepts_an_incentive_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let jfile = dir.path().join("j.json");
    std::fs::write(&jfile, serde_json::to_string(&vec![-0.5; 12]).unwrap()).unwrap();
    let out = dir.path().join("eq");
    let result = run(&[
        "equilibrium",
        scenario.to_str().unwrap(),
        "--incentive",
        jfile.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0));
    // A uniform discount on every link lowers every cost by 0.5 relative to
    // the no-incentive fixture's zero-flow floor on link 7 (4.0).
    let costs = read_csv_column(&out.join("equilibrium.csv"), 2);
    assert!(costs[6] < 4.0, "{}", costs[6]);
}

#[test]
fn malformed_scenario_exits_one_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ \"nodes\": [").unwrap();
    let out = dir.path().join("x");
    let result = run(&["equilibrium", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("schema error"), "{stderr}");
}

#[test]
fn bad_incentive_length_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let jfile = dir.path().join("j.json");
    std::fs::write(&jfile, "[0.0, 0.0]").unwrap();
    let result = run(&[
        "equilibrium",
        scenario.to_str().unwrap(),
        "--incentive",
        jfile.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("12"));
}

#[test]
fn iteration_cap_exits_two_but_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let out = dir.path().join("eq");
    let result = run(&[
        "equilibrium",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--config",
        "max_iters=1",
    ]);
    assert_eq!(result.status.code(), Some(2), "{result:?}");
    assert!(out.join("equilibrium.csv").exists());
    assert!(out.join("trace.csv").exists());
    assert_eq!(read_csv_column(&out.join("trace.csv"), 0).len(), 1);
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let result = run(&[
        "equilibrium",
        scenario.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--config",
        "warp_speed=9",
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn generate_is_deterministic_and_runnable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let result = run(&[
            "generate", "--n", "24", "--m", "2", "--od", "3", "--k", "2", "--seed", "7", "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(result.status.code(), Some(0), "{result:?}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let out = dir.path().join("eq");
    let result = run(&["equilibrium", a.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    assert!(out.join("equilibrium.csv").exists());
}

#[test]
fn generate_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "generate", "--n", "2", "--m", "2", "--od", "1", "--k", "1", "--seed", "1", "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn minimal_generate_still_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.json");
    let result = run(&[
        "generate", "--n", "3", "--m", "2", "--od", "1", "--k", "1", "--seed", "5", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let out = dir.path().join("eq");
    let result = run(&["equilibrium", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
}

#[test]
fn pinned_box_optimize_reports_zero_incentives() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(CHENGDU_SCENARIO_JSON).unwrap();
    doc["incentive_box"]["j_min"] = serde_json::json!(vec![0.0; 12]);
    doc["incentive_box"]["j_max"] = serde_json::json!(vec![0.0; 12]);
    let path = dir.path().join("pinned.json");
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = dir.path().join("opt");
    let result = run(&["optimize", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let j = read_csv_column(&out.join("incentive.csv"), 1);
    assert!(j.iter().all(|&x| x == 0.0), "{j:?}");
    let run_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert!(
        (run_json["profit"].as_f64().unwrap() - run_json["no_incentive_profit"].as_f64().unwrap())
            .abs()
            < 1e-9
    );
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,delta_f,delta_j,profit\n"));
}

#[test]
fn share_single_provider_takes_everything() {
    let dir = tempfile::tempdir().unwrap();
    // Minimal single-provider scenario and a handcrafted optimize run.
    let result = run(&[
        "generate", "--n", "3", "--m", "2", "--od", "1", "--k", "1", "--seed", "9", "--out",
        dir.path().join("s.json").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0));
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    let num_links = doc["links"].as_array().unwrap().len();
    for link in doc["links"].as_array_mut().unwrap() {
        link["provider"] = serde_json::json!(0);
    }
    doc["providers"] = serde_json::json!(["solo"]);
    doc["theta"] = serde_json::json!([1.0]);
    let scenario = dir.path().join("solo.json");
    std::fs::write(&scenario, serde_json::to_string(&doc).unwrap()).unwrap();

    let run_dir = dir.path().join("opt");
    std::fs::create_dir_all(&run_dir).unwrap();
    let run_json = serde_json::json!({
        "command": "optimize",
        "scenario": scenario.to_str().unwrap(),
        "threads": 1,
        "solver": doc["solver"],
        "converged": true,
        "degraded": false,
        "iterations": 1,
        "warmup_iterations": 1,
        "delta_f": 0.0,
        "delta_j": 0.0,
        "profit": 100.0,
        "no_incentive_profit": 40.0,
        "constraint_residual": 0.0,
        "box_violation": 0.0,
        "j_star": vec![0.0; num_links],
        "f_star": vec![0.0; num_links],
        "f_phi": vec![0.0; num_links],
        "providers": ["solo"],
        "theta": [1.0],
        "provider_profits_before": [40.0],
        "provider_profits_after": [100.0],
        "timings": { "total_seconds": 0.0 }
    });
    std::fs::write(run_dir.join("run.json"), serde_json::to_string(&run_json).unwrap()).unwrap();

    let out = dir.path().join("share");
    let result = run(&[
        "share",
        scenario.to_str().unwrap(),
        "--incentive-result",
        run_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let text = std::fs::read_to_string(out.join("sharing.csv")).unwrap();
    assert!(text.starts_with("provider,before,after,compensation,final,increase\n"));
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[0], "solo");
    assert_eq!(fields[3], "0"); // compensation
    assert_eq!(fields[4], "100.000"); // final = R_c
}

#[test]
fn share_without_artifacts_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let result = run(&[
        "share",
        scenario.to_str().unwrap(),
        "--incentive-result",
        dir.path().join("nothing").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn pipeline_produces_consistent_sharing_on_chengdu() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_chengdu(dir.path());
    let out = dir.path().join("pipe");
    let result = run(&["pipeline", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    for file in ["equilibrium.csv", "incentive.csv", "sharing.csv", "trace.csv", "run.json"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let run_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    let r_c = run_json["profit"].as_f64().unwrap();
    let before: Vec<f64> = run_json["provider_profits_before"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let increase = read_csv_column(&out.join("sharing.csv"), 5);
    let sum_increase: f64 = increase.iter().sum();
    let expected = r_c - before.iter().sum::<f64>();
    // sum of increases equals the bargaining surplus; the CSV carries six
    // significant digits.
    assert!((sum_increase - expected).abs() < 1e-2, "{sum_increase} vs {expected}");
    assert!(increase.iter().all(|&x| x > 0.0));
}
