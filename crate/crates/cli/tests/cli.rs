use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ecim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const ANTIFERRO: &str = r#"{"n": 2, "J": [[0, -2], [-2, 0]], "h": [0, 0], "label": "pair"}"#;

#[test]
fn zero_iteration_solve_writes_header_and_initial_row() {
    let dir = TempDir::new().unwrap();
    let prob = write(&dir, "p.json", ANTIFERRO);
    let cfg = write(
        &dir,
        "c.json",
        r#"{"mode": "linearized", "schedule": {"kind": "constant", "beta": 0.1}, "sigma2": 0.01, "K": 0, "seed": 1}"#,
    );
    let out = dir.path().join("t.csv");
    let res = ecim(&["solve", "--problem", s(&prob), "--config", s(&cfg), "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().collect::<Vec<_>>(), ["k,energy", "0,0"]);
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("final_energy 0"));
    assert!(stdout.contains("spins +1 +1"));
    assert!(stdout.contains("discrete_energy -2"));
}

#[test]
fn oracle_on_antiferromagnetic_pair() {
    let dir = TempDir::new().unwrap();
    let prob = write(&dir, "p.json", ANTIFERRO);
    let out = dir.path().join("o.json");
    let res = ecim(&["oracle", "--problem", s(&prob), "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = json(&out);
    assert!((report["e_star"].as_f64().unwrap() + 0.5).abs() < 1e-9);
    assert_eq!(report["certified"], Value::Bool(true));
    assert_eq!(report["noise_required"], Value::Bool(true));
}

struct Pipeline {
    dir: TempDir,
    prob: PathBuf,
    cfg: PathBuf,
    oracle: PathBuf,
}

fn pipeline(kind: &str, config: &str) -> Pipeline {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "spec.json",
        &format!(r#"{{"n": 8, "kind": "{kind}", "field_scale": 0.5, "seed": 7}}"#),
    );
    let prob = dir.path().join("prob.json");
    assert!(ecim(&["generate", "--spec", s(&spec), "--out", s(&prob)]).status.success());
    let cfg = write(&dir, "run.json", config);
    let oracle = dir.path().join("oracle.json");
    assert!(ecim(&["oracle", "--problem", s(&prob), "--out", s(&oracle)]).status.success());
    Pipeline { dir, prob, cfg, oracle }
}

impl Pipeline {
    fn ensemble(&self, name: &str) -> PathBuf {
        let out = self.dir.path().join(name);
        let res = ecim(&[
            "ensemble", "--problem", s(&self.prob), "--config", s(&self.cfg), "-M", "50", "--seed", "42",
            "--oracle", s(&self.oracle), "--out", s(&out),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        out
    }

    fn bounds(&self, extra: &[&str]) -> PathBuf {
        let out = self.dir.path().join("bounds.json");
        let mut args = vec![
            "bounds", "--problem", s(&self.prob), "--config", s(&self.cfg), "--oracle", s(&self.oracle),
            "--out", s(&out),
        ];
        args.extend_from_slice(extra);
        assert!(ecim(&args).status.success());
        out
    }

    fn verify(&self, ens: &Path, bounds: &Path) -> (Output, Value) {
        let out = self.dir.path().join("verdict.json");
        let res = ecim(&["verify", "--ensemble", s(ens), "--bounds", s(bounds), "--out", s(&out)]);
        let verdicts = json(&out);
        (res, verdicts)
    }
}

const PD_CONFIG: &str = r#"{"mode": "linearized_noise_scaled", "schedule": {"kind": "constant", "beta": 0.05}, "sigma2": 0.01, "K": 2000, "seed": 0}"#;

#[test]
fn positive_definite_pipeline_verifies() {
    let pl = pipeline("positive_definite", PD_CONFIG);
    let oracle = json(&pl.oracle);
    assert_eq!(oracle["definiteness"], "positive_definite");
    assert_eq!(oracle["certified"], Value::Bool(true));
    let ens = pl.ensemble("ens.csv");
    let bounds = pl.bounds(&["--epsilon", "0.01"]);
    let report = json(&bounds);
    assert_eq!(report["mu_source"], "estimated");
    assert!(report["kappa"].as_u64().is_some());
    let (res, verdicts) = pl.verify(&ens, &bounds);
    assert_eq!(res.status.code(), Some(0), "{verdicts}");
    let checks: Vec<&str> = verdicts.as_array().unwrap().iter().map(|v| v["check"].as_str().unwrap()).collect();
    assert_eq!(checks, ["liminf_gap", "kappa"]);
    assert!(verdicts.as_array().unwrap().iter().all(|v| v["verdict"] == "PASS"));
}

#[test]
fn diminishing_schedule_adds_rate_check() {
    let pl = pipeline(
        "positive_definite",
        r#"{"mode": "linearized_noise_scaled", "schedule": {"kind": "poly", "beta0": 0.5, "r": 0.75}, "sigma2": 0.01, "K": 5000, "seed": 0}"#,
    );
    let ens = pl.ensemble("ens.csv");
    let bounds = pl.bounds(&["--mu", "0.5"]);
    assert_eq!(json(&bounds)["mu_source"], "user_supplied");
    let (res, verdicts) = pl.verify(&ens, &bounds);
    assert_eq!(res.status.code(), Some(0), "{verdicts}");
    assert_eq!(verdicts[1]["check"], "rate_fit");
    assert!(verdicts[1]["observed"].as_f64().unwrap() < 0.0);
}

#[test]
fn indefinite_instance_is_assumption_unverified() {
    let pl = pipeline("indefinite", PD_CONFIG);
    let ens = pl.ensemble("ens.csv");
    let bounds = pl.bounds(&["--mu", "0.1"]);
    let (res, verdicts) = pl.verify(&ens, &bounds);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(verdicts[0]["verdict"], "ASSUMPTION_UNVERIFIED");
}

#[test]
fn failing_bound_exits_one() {
    let pl = pipeline("positive_definite", PD_CONFIG);
    let ens = pl.ensemble("ens.csv");
    let bounds = pl.bounds(&[]);
    let mut report = json(&bounds);
    report["liminf_bound_modified"] = Value::from(1e-9);
    std::fs::write(&bounds, report.to_string()).unwrap();
    let (res, verdicts) = pl.verify(&ens, &bounds);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(verdicts[0]["verdict"], "FAIL");
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let pl = pipeline("positive_definite", PD_CONFIG);
    let a = std::fs::read(pl.ensemble("a.csv")).unwrap();
    let b = std::fs::read(pl.ensemble("b.csv")).unwrap();
    assert_eq!(a, b);

    let first = std::fs::read(&pl.oracle).unwrap();
    let again = pl.dir.path().join("oracle2.json");
    assert!(ecim(&["oracle", "--problem", s(&pl.prob), "--out", s(&again)]).status.success());
    assert_eq!(first, std::fs::read(&again).unwrap());
}

#[test]
fn generated_problem_round_trips() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.json", r#"{"n": 5, "kind": "asymmetric_gaussian", "field_scale": 0.0, "seed": 3}"#);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(ecim(&["generate", "--spec", s(&spec), "--out", s(&a)]).status.success());
    assert!(ecim(&["generate", "--spec", s(&spec), "--out", s(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let p = json(&a);
    assert_eq!(p["n"], 5);
    assert_ne!(p["J"][0][1], p["J"][1][0]);
}

#[test]
fn malformed_inputs_name_the_field() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let cases = [
        (r#"{"n": 2, "J": [[0, 1], [1]], "h": [0, 0], "label": null}"#, "row"),
        (r#"{"n": 2, "J": [[0, 1], [1, 0]], "label": null}"#, "h"),
    ];
    for (text, needle) in cases {
        let prob = write(&dir, "bad.json", text);
        let res = ecim(&["oracle", "--problem", s(&prob), "--out", s(&out)]);
        assert!(!res.status.success());
        let err = String::from_utf8_lossy(&res.stderr);
        assert!(err.contains(needle), "{err}");
    }

    let prob = write(&dir, "p.json", ANTIFERRO);
    let cfg = write(&dir, "c.json", r#"{"mode": "linearized", "schedule": {"kind": "constant"}, "sigma2": 0.01, "K": 5, "seed": 1}"#);
    let res = ecim(&["solve", "--problem", s(&prob), "--config", s(&cfg), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("schedule.beta"));

    let cfg = write(&dir, "c.json", r#"{"mode": "linearized", "schedule": {"kind": "constant", "beta": 0.1}, "K": 5, "seed": 1}"#);
    let res = ecim(&["solve", "--problem", s(&prob), "--config", s(&cfg), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("sigma2"));

    let ens = write(&dir, "e.csv", "k,gap\n0,1\n");
    let res = ecim(&["verify", "--ensemble", s(&ens), "--bounds", s(&prob), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("header"));
    assert!(!out.exists());
}
