use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn czfid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_czfid"))
        .args(args)
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("czfid runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = czfid(&["simulate", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let counts = fs::read_to_string(dir.path().join("run/counts.csv")).unwrap();
    let data_rows = counts.lines().skip(1).filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 1296);
    assert!(counts.contains("#seed=") && counts.contains("#N=") && counts.contains("#V=0.953"));
    let refs = fs::read_to_string(dir.path().join("run/references.csv")).unwrap();
    assert_eq!(refs.lines().count(), 37);
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/config.json")).unwrap()).unwrap();
    assert!(echo["seed"].is_u64());
}

#[test]
fn round_trip_without_warnings() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"pair_rate": 2e4, "visibility": 0.5, "seed": 42}"#,
    );
    let sim = czfid(&["simulate", "--config", "cfg.json", "--out", "run"], dir.path());
    assert!(sim.status.success());
    let est = czfid(
        &[
            "estimate",
            "run/counts.csv",
            "--refs",
            "run/references.csv",
            "--expansion",
            "all",
            "--renormalize",
            "--bootstrap",
            "20",
            "--out",
            "report.json",
        ],
        dir.path(),
    );
    assert!(est.status.success(), "{}", String::from_utf8_lossy(&est.stderr));
    assert!(
        est.stderr.is_empty(),
        "unexpected warnings: {}",
        String::from_utf8_lossy(&est.stderr)
    );
    let table = String::from_utf8(est.stdout).unwrap();
    for label in ["H/V", "D/A", "R/L", "F_D", "F_H", "F_chi", "F_MC", "min(F1,F2)"] {
        assert!(table.contains(label), "missing {label} in\n{table}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let f_chi = report["tomography"]["f_chi"].as_f64().unwrap();
    assert!((f_chi - 0.625).abs() < 0.01, "{f_chi}");
    assert!(report["tomography"]["sigma"].as_f64().unwrap() > 0.0);
    let f_h = report["hofmann"]["f_h"]["value"].as_f64().unwrap();
    let df_h = report["hofmann"]["f_h"]["uncertainty"].as_f64().unwrap();
    assert!((f_h - 0.5).abs() < 3.0 * df_h, "{f_h} ± {df_h}");
    assert_eq!(report["monte_carlo"].as_array().unwrap().len(), 3);
    assert_eq!(report["provenance"]["seed"].as_u64(), Some(42));
    assert_eq!(report["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"pair_rate": 1e4, "visibility": 0.9, "seed": 7, "drift": {"kind": "random-walk", "step": 0.01}}"#,
    );
    for out in ["a", "b"] {
        assert!(czfid(&["simulate", "--config", "cfg.json", "--out", out], dir.path())
            .status
            .success());
    }
    for f in ["counts.csv", "references.csv", "config.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"pair_rate": 1e4, "visibility": 1.2}"#);
    let out = czfid(&["simulate", "--config", "bad.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        czfid(&["simulate", "--config", "missing.json", "--out", "x"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(czfid(&["frobnicate"], dir.path()).status.code(), Some(2));

    write(
        dir.path(),
        "cfg.json",
        r#"{"pair_rate": 1e3, "visibility": 0.5, "seed": 1}"#,
    );
    assert!(czfid(&["simulate", "--config", "cfg.json", "--out", "run"], dir.path())
        .status
        .success());
    let out = czfid(&["estimate", "run/counts.csv", "--renormalize"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let zeros: String = fs::read_to_string(dir.path().join("run/counts.csv"))
        .unwrap()
        .lines()
        .map(|l| {
            if l.starts_with('#') || l.starts_with('j') {
                l.to_string()
            } else {
                let (head, _) = l.rsplit_once(',').unwrap();
                format!("{head},0")
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    write(dir.path(), "zeros.csv", &zeros);
    assert_eq!(czfid(&["estimate", "zeros.csv"], dir.path()).status.code(), Some(3));

    write(
        dir.path(),
        "sweep.json",
        r#"{"start": 0.0, "stop": 1.5, "points": 3, "analytic": true}"#,
    );
    assert_eq!(
        czfid(&["sweep", "sweep.json", "--out", "s.csv"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn analytic_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "sweep.json",
        r#"{"start": 0.0, "stop": 1.0, "points": 4, "analytic": true}"#,
    );
    assert!(czfid(&["sweep", "sweep.json", "--out", "s.csv"], dir.path())
        .status
        .success());
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "V,F_chi,F_H,F_D");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,0.25,0,0.333"));
    assert_eq!(lines[4], "1,1,1,1");
}

#[test]
fn reconstruct_writes_choi_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"pair_rate": 1e4, "visibility": 1.0, "seed": 2}"#,
    );
    assert!(czfid(&["simulate", "--config", "cfg.json", "--out", "run"], dir.path())
        .status
        .success());
    let out = czfid(&["reconstruct", "run/counts.csv", "--out", "chi.csv"], dir.path());
    assert!(out.status.success());
    let chi = fs::read_to_string(dir.path().join("chi.csv")).unwrap();
    assert!(chi.starts_with("row,col,re,im\n"));
    assert_eq!(chi.lines().filter(|l| !l.starts_with('#')).count(), 257);
    assert!(chi.contains("#trace="));
    assert!(String::from_utf8_lossy(&out.stdout).contains("F_chi = 0.99"));
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let help = String::from_utf8(czfid(&["estimate", "--help"], dir.path()).stdout).unwrap();
    for flag in [
        "--refs",
        "--expansion",
        "--renormalize",
        "--bootstrap",
        "--seed",
        "--out",
        "--stop-threshold",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}
