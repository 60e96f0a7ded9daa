use std::fs;
use std::path::Path;
use std::process::Command;

const SCENARIO: &str = r#"{
  "name": "smoke",
  "code": [[4, 5], [4, 6]],
  "L": [1, 2, "inf"],
  "tau": [1.5, 2.0],
  "mu": 1.0,
  "sweep": { "eps": [0.1] },
  "engine": "both",
  "n_blocks": 20000,
  "warmup": 200,
  "seed": 9,
  "max_points": 50
}"#;

fn mpfj() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpfj"))
}

fn run_into(scenario: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    mpfj()
        .arg("run")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn run_writes_all_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("smoke.json");
    fs::write(&scenario, SCENARIO).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_into(&scenario, out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["summary.csv", "latency_cdf.csv", "paoi_cdf.csv", "tau_sweep.csv", "manifest.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }

    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 3 * 2);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for r in &rows {
        assert_eq!(r[col("point")].parse::<usize>().unwrap(), rows.iter().position(|x| x == r).unwrap());
        let ps: f64 = r[col("ps_sim")].parse().unwrap();
        assert!((0.0..=1.0).contains(&ps));
        if r[col("L")] != "2" {
            assert_eq!(r[col("paoi_analytic_kind")], "exact");
            let ks: f64 = r[col("ks_paoi")].parse().unwrap();
            assert!(ks < 0.05, "{r:?}");
        }
        let ks: f64 = r[col("ks_latency")].parse().unwrap();
        assert!(ks < 0.03, "{r:?}");
    }

    let sweep = fs::read_to_string(a.join("tau_sweep.csv")).unwrap();
    let head = sweep.lines().next().unwrap();
    assert!(head.starts_with("K,N,eps,G,tau,L1_analytic_p95"), "{head}");
    assert_eq!(sweep.lines().count(), 1 + 2 * 2);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["points"].as_array().unwrap().len(), 12);
}

#[test]
fn seed_override_changes_simulation_only() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    fs::write(
        &scenario,
        r#"{"name":"s","code":[4,5],"L":1,"tau":2,"eps":0.1,"n_blocks":5000,"warmup":100}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_into(&scenario, &a, &["--seed", "1"]).status.success());
    assert!(run_into(&scenario, &b, &["--seed", "2"]).status.success());
    let read = |d: &Path| fs::read_to_string(d.join("summary.csv")).unwrap();
    let (x, y) = (read(&a), read(&b));
    assert_ne!(x, y);
    let col = |s: &str, i: usize| s.lines().nth(1).unwrap().split(',').nth(i).unwrap().to_string();
    // ps_analytic is column 11.
    assert_eq!(col(&x, 11), col(&y, 11));
}

#[test]
fn analytic_engine_flags_unstable_points() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("r.json");
    fs::write(
        &scenario,
        r#"{"name":"r","code":[1,6],"L":"inf","tau":1.5,"eps":0.1,"sweep":{"K":[1,2,3,4,5,6]},
            "redundancy":{"G":0.5},"engine":"analytic","grid_step":0.05}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run_into(&scenario, &out, &[]);
    assert!(o.status.success());
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let status: Vec<String> = summary.lines().skip(1).map(|l| l.split(',').nth(9).unwrap().to_string()).collect();
    assert_eq!(status, ["unstable", "unstable", "unstable", "ok", "ok", "ok"]);
}

#[test]
fn invalid_scenario_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.json");
    fs::write(&scenario, r#"{"name":"bad","code":[6,5],"L":1,"tau":2}"#).unwrap();
    let o = run_into(&scenario, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "k_exceeds_n");
    assert!(err["message"].as_str().unwrap().contains('6'));

    let o = run_into(&dir.path().join("missing.json"), &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn check_lists_grid_points() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("c.json");
    fs::write(&scenario, SCENARIO).unwrap();
    let o = mpfj().arg("check").arg(&scenario).output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 12);
}
