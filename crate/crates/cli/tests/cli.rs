use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn prot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prot")).args(args).output().expect("binary runs")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_game(dir: &Path) -> String {
    let path = dir.join("game.csv");
    let mut text = String::from("expert_1,expert_2,expert_3\n");
    for t in 1..=200 {
        let x = (t as f64 * 0.7).sin();
        text.push_str(&format!("{x},{},{}\n", -x, 0.5 * (t as f64 * 1.3).cos()));
    }
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_all_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let game = write_game(dir.path());
    let out_a = dir.path().join("a");
    let run = || {
        let o = prot(&["run", "--game", &game, "--seeds", "2", "--out", out_a.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        ["report.json", "trace.csv", "aggregate.csv"].map(|name| fs::read(out_a.join(name)).unwrap())
    };
    let first = run();
    assert_eq!(first, run());
    let trace = fs::read_to_string(out_a.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,chosen,loss,cum_loss,v,delta_v,fluc,mu,eps\n"));
    assert_eq!(trace.lines().count(), 201);
    let report: Value = serde_json::from_str(&fs::read_to_string(out_a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "game");
    assert_eq!(report["num_seeds"], 2);
    assert!(report["config"]["schedule"]["a"].as_f64().unwrap() > 3.0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{
            "game": {"source": "generator", "generator": {"name": "bounded", "num_experts": 3, "horizon": 100}},
            "schedule": {"target_eps": 0.5, "gamma": {"kind": "power", "delta": 1.0}},
            "seeds": {"count": 5},
            "regime": "per-step"
        }"#,
    )
    .unwrap();
    let r = json_stdout(&prot(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "3",
        "--seed",
        "10",
        "--regime",
        "once",
        "--gamma",
        "power:0.8",
    ]));
    assert_eq!(r["num_seeds"], 3);
    assert_eq!(r["config"]["regime"], "once");
    assert_eq!(r["config"]["seeds"]["base"], 10);
    assert_eq!(r["config"]["schedule"]["gamma"]["delta"], 0.8);
    assert_eq!(r["config"]["schedule"]["target_eps"], 0.5);
}

#[test]
fn adversary_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adv");
    let r = json_stdout(&prot(&["adversary", "--eps", "0.25", "--horizon", "10", "--out", out.to_str().unwrap()]));
    assert_eq!(r["holds"], true);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,M_t,s1,s2,p1,E_loss,v,fluc,norm_regret_lb\n"));
    assert_eq!(trace.lines().count(), 11);
}

#[test]
fn trading_from_fbm_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trade");
    let r = json_stdout(&prot(&["trading", "--hurst", "0.7", "--steps", "256", "--out", out.to_str().unwrap()]));
    assert_eq!(r["kind"], "trading");
    assert_eq!(r["steps"], 256);
    assert!(r["identity_residual"].as_f64().unwrap() <= r["identity_tolerance"].as_f64().unwrap());
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,S,s1_cum,s2_cum,learner_cum,volume,fluc\n0,100,"));

    let prices = dir.path().join("prices.csv");
    fs::write(&prices, "price\n1\n2\n4\n").unwrap();
    let r = json_stdout(&prot(&["trading", "--prices", prices.to_str().unwrap()]));
    assert_eq!(r["expert_1_total"], 4.0);
    assert_eq!(r["learner_total"], 0.0);
}

#[test]
fn verify_bounds_and_hannan() {
    let r = json_stdout(&prot(&["verify-bounds", "--generator", "fluc-scaled", "--experts", "4", "--horizon", "300"]));
    assert_eq!(r["all_hold"], true);
    let r = json_stdout(&prot(&["hannan", "--generator", "bounded", "--horizon", "1024", "--seeds", "4"]));
    assert!(r["warning"].is_null());
    assert_eq!(r["checkpoints"].as_array().unwrap().len(), 11);
    let o = prot(&["hannan", "--generator", "bounded", "--horizon", "64", "--gamma", "power:0.4"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not converge"));
}

#[test]
fn probe_compares_probabilities() {
    let r = json_stdout(&prot(&["probe", "--cumulative", "0,-1.5,2", "--eps", "0.7", "--samples", "100000"]));
    assert!(r["max_deviation_se"].as_f64().unwrap() < 5.0);
    assert_eq!(r["exact"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let o = prot(&["run", "--game", "/nonexistent/losses.csv"]);
    assert!(!o.status.success());
    let o = prot(&["run", "--generator", "bounded", "--gamma", "linear:2"]);
    assert!(!o.status.success());
    let o = prot(&["run"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no game given"));
}
