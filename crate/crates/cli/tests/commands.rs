use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mflq(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mflq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn config_arg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn scalar(v: &Value) -> f64 {
    v["constant"][0][0].as_f64().unwrap()
}

#[test]
fn synth_social_scalar_writes_pi() {
    let dir = tempfile::tempdir().unwrap();
    let o = mflq(
        &["synth", "--config", &config_arg("scalar_social.json")],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = read_json(&dir.path().join("gains.json"));
    assert_eq!(g["problem"], "social");
    assert!((scalar(&g["Pi"]) - 1.8).abs() < 1e-10);
    assert!((scalar(&g["s"]) + 2.625).abs() < 1e-10);
    assert!(dir.path().join("synth.log").exists());
}

#[test]
fn synth_example2_reports_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    let o = mflq(
        &["synth", "--config", &config_arg("example2.json")],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["category"], "infeasible");
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("infeasible x̄ unless x̄(0)"), "{msg}");
    assert!(msg.contains("-3.33333"), "{msg}");
}

fn write_config(dir: &Path, model: &str, problem: &str) -> String {
    let text = format!(
        r#"{{"model": {model}, "problem": "{problem}", "horizon": {{"kind": "infinite"}},
            "sim": {{"N": 4, "dt": 0.1, "T": 1.0, "replications": 1, "seed": 0}}}}"#
    );
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn scalar_model(a: f64, b: f64, g: f64, gamma: f64, eta: f64, f: f64) -> String {
    format!(
        r#"{{"n": 1, "r": 1, "A": [[{a}]], "B": [[{b}]], "G": [[{g}]], "Q": [[1.0]], "R": [[1.0]],
            "Gamma": [[{gamma}]], "eta": [{eta}], "rho": 0.6, "f": [{f}], "sigma": [0.1],
            "x_bar0": [1.0], "init_cov": [[0.1]]}}"#
    )
}

#[test]
fn synth_without_coupling_has_zero_k_and_s() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &scalar_model(0.5, 1.0, 0.0, 0.0, 0.0, 0.0),
        "social",
    );
    let o = mflq(&["synth", "--config", &cfg], dir.path());
    assert!(o.status.success());
    let g = read_json(&dir.path().join("gains.json"));
    assert!(scalar(&g["K"]).abs() < 1e-12);
    assert!(scalar(&g["s"]).abs() < 1e-12);
}

#[test]
fn stabilize_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = mflq(
        &["stabilize", "--config", &config_arg("scalar_social.json")],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(
        read_json(&dir.path().join("stabilization.json"))["verdict"],
        "ConsistentTrue"
    );

    let o = mflq(
        &["stabilize", "--config", &config_arg("example2.json")],
        dir.path(),
    );
    assert!(o.status.success());
    assert_eq!(
        read_json(&dir.path().join("stabilization.json"))["verdict"],
        "PremiseViolated"
    );

    let cfg = write_config(
        dir.path(),
        &scalar_model(1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        "social",
    );
    let o = mflq(&["stabilize", "--config", &cfg], dir.path());
    assert!(o.status.success());
    assert_eq!(
        read_json(&dir.path().join("stabilization.json"))["verdict"],
        "ConsistentFalse"
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = mflq(&["synth"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let p = dir.path().join("bad.json");
    fs::write(&p, "{\"problem\": \"social\"}").unwrap();
    let o = mflq(&["synth", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        &scalar_model(1.0, 1.0, -0.2, 0.0, 0.0, 0.0),
        "game",
    );
    let o = mflq(&["synth", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires G = 0"));
}

#[test]
fn figures_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = mflq(&["figures", "--which", "1,5", "--seed", "9"], d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["fig1.csv", "fig5.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap()
        );
    }
    let fig1 = fs::read_to_string(a.path().join("fig1.csv")).unwrap();
    let header = fig1.lines().next().unwrap();
    assert_eq!(
        header
            .split(',')
            .filter(|c| c.starts_with("agent_"))
            .count(),
        50
    );
    let fig5 = fs::read_to_string(a.path().join("fig5.csv")).unwrap();
    assert_eq!(
        fig5.lines().next().unwrap(),
        "t,xbar_PS,xavg_PS,xbar_PG,xavg_PG"
    );
    assert!(a.path().join("fig5_summary.json").exists());
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let run = |seed: &str, threads: &str| {
        let d = tempfile::tempdir().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_mflq"))
            .args([
                "simulate",
                "--config",
                &config_arg("scalar_social.json"),
                "--seed",
                seed,
            ])
            .arg("--out")
            .arg(d.path())
            .env("MFLQ_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let costs = read_json(&d.path().join("costs.json"));
        assert!(costs["costs"]["social"].as_f64().unwrap() > 0.0);
        fs::read(d.path().join("trajectories.csv")).unwrap()
    };
    let x = run("5", "1");
    assert_eq!(x, run("5", "3"));
    assert_ne!(x, run("6", "1"));
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("replication,t,agent_id,x1,u1\n"));
}

#[test]
fn representation_study_passes() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["representation_social.json", "representation_game.json"] {
        let o = mflq(&["study", "--config", &config_arg(name)], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let r = read_json(&dir.path().join("study.json"));
        assert_eq!(r["kind"], "representation");
        assert_eq!(r["passed"], true, "{name}: {r}");
    }
}

#[test]
fn bundled_configs_load() {
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            mflq_core::ExperimentConfig::load(&p)
                .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}
