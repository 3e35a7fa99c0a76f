use std::process::Command;

use fpu_tori::harness::{log_grid, run, Config, ConfigError, Kind};

const SCAN: &str = "# short scan\nT = 256\namp_min = 0.1\namp_max = 1.0\npoints = 3\n";

#[test]
fn config_parsing() {
    let c = Config::parse("a = 1 # trailing\n\n  b=x,y \n").unwrap();
    assert_eq!(c.get("a", 0i32).unwrap(), 1);
    assert_eq!(c.get("missing", 2.5).unwrap(), 2.5);
    assert!(matches!(c.get("b", 0.0), Err(ConfigError::Value { .. })));
    assert_eq!(c.canonical(), "a = 1\nmissing = 2.5\n");
    assert!(matches!(Config::parse("a = 1\na = 2"), Err(ConfigError::Duplicate(_))));
    assert!(matches!(Config::parse("ok = 1\nnot a pair"), Err(ConfigError::Syntax(2))));
    assert!(matches!(Config::parse(" = 3"), Err(ConfigError::Syntax(1))));
    let l = Config::parse("istar = 1e-4, 2").unwrap();
    assert_eq!(l.list("istar", &[]).unwrap(), vec![1e-4, 2.0]);
}

#[test]
fn unknown_and_invalid_keys_are_rejected() {
    assert!(matches!(run(Kind::ChaosScan, "T = 256\nfoo = 1"), Err(ConfigError::Unknown(k)) if k == "foo"));
    assert!(matches!(run(Kind::ChaosScan, "N = 1"), Err(ConfigError::Invalid(_))));
    assert!(matches!(run(Kind::ChaosScan, "scheme = rk4"), Err(ConfigError::Value { .. })));
}

#[test]
fn log_grid_endpoints() {
    let g = log_grid(1e-3, 10.0, 5);
    assert_eq!(g.len(), 5);
    assert!((g[0] - 1e-3).abs() < 1e-18 && (g[4] - 10.0).abs() < 1e-12);
    assert!((g[2] - 0.1).abs() < 1e-14);
}

#[test]
fn chaos_scan_is_deterministic_with_provenance() {
    let a = run(Kind::ChaosScan, SCAN).unwrap();
    let b = run(Kind::ChaosScan, &format!("{SCAN}threads = 3\n")).unwrap();
    assert!(a.failures.is_empty());
    let (name, body) = &a.files[0];
    assert_eq!(name, "chaos_scan.csv");
    let lines: Vec<&str> = body.lines().collect();
    assert!(lines[0].starts_with("# fpu-tori ") && lines[0].ends_with(" chaos-scan"));
    let hash = lines[1].strip_prefix("# config-sha256 ").unwrap();
    assert_eq!(hash.len(), 64);
    assert!(body.contains("# T = 256\n") && body.contains("# beta = 0.25\n"));
    let data = |s: &str| s.lines().filter(|l| !l.starts_with('#')).map(String::from).collect::<Vec<_>>();
    assert_eq!(data(body).len(), 4);
    // same rows whatever the thread count; the header records the setting
    assert_eq!(data(body), data(&b.files[0].1));
    assert_ne!(body, &b.files[0].1);
    assert_eq!(body, &run(Kind::ChaosScan, SCAN).unwrap().files[0].1);
}

#[test]
fn normalize_writes_norms_and_stack() {
    let o = run(Kind::Normalize, "alpha = 0.25\nbeta = 0\nsteps = 3\nistar = 1e-4,1e-4\n").unwrap();
    let names: Vec<&str> = o.files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["norms.csv", "stack.txt"]);
    assert_eq!(o.files[0].1.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

fn fpu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fpu"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scan.cfg");
    std::fs::write(&cfg, SCAN).unwrap();
    let out = dir.path().join("out");
    let st = fpu().args(["chaos-scan", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(std::fs::read_to_string(out.join("chaos_scan.csv")).unwrap().contains("amplitude,E_S,delta_omega"));

    std::fs::write(&cfg, "T = 256\nbogus = 1\n").unwrap();
    let st = fpu().args(["chaos-scan", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let st = fpu().args(["chaos-scan", "--config"]).arg(dir.path().join("absent.cfg")).status().unwrap();
    assert_eq!(st.code(), Some(1));

    // a point whose normal form diverges is a per-point failure
    std::fs::write(&cfg, "alpha = 0.25\nbeta = 0\nsteps = 4\nistar = 1,1\n").unwrap();
    let st = fpu().args(["normalize", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(out.join("norms.csv").exists());
}
