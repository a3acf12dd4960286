use std::process::Command;

use mixcem_cli::config::{BcName, ExperimentConfig, OneOrMany, Pattern};
use mixcem_cli::experiment::run_experiment;
use mixcem_cli::selftest::smoke_config;

#[test]
fn smoke_run_is_saturated() {
    let mut cfg = smoke_config(BcName::Neumann, 1.0);
    cfg.osly = vec![4];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 1);
    let m = out.rows[0].measurement().unwrap();
    assert!(m.e_sigma <= 1e-6, "e_sigma {:e}", m.e_sigma);
    assert!(m.e_u.is_none());
    assert_eq!(m.t_fine_s, 0.0);
    assert!(out.log.iter().any(|l| l.contains("Lambda=")));
}

#[test]
fn more_basis_functions_do_not_hurt() {
    let mut errs = Vec::new();
    for nbf in [4, 5, 6] {
        let mut cfg = smoke_config(BcName::Neumann, 1e4);
        cfg.nc = OneOrMany::One(8);
        cfg.nf = 32;
        cfg.nbf = nbf;
        cfg.osly = vec![2];
        let out = run_experiment(&cfg).unwrap();
        errs.push(out.rows[0].measurement().unwrap().e_sigma);
    }
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn failing_tuples_become_rows() {
    let mut cfg = smoke_config(BcName::Dirichlet, 1.0);
    cfg.pattern = Pattern::Raster {
        path: "/nonexistent/raster.csv".into(),
    };
    cfg.contrast = vec![1.0, 10.0];
    cfg.osly = vec![1, 2];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.rows.len(), 4);
    assert!(out.rows.iter().all(|r| r.outcome.is_err()));
    assert_eq!(out.log.iter().filter(|l| l.contains("FAILED")).count(), 2);
}

#[test]
fn config_json_round_trip_with_defaults() {
    let cfg: ExperimentConfig = serde_json::from_str(
        r#"{"nf": 16, "nc": [2, 4], "osly": [1, 2], "contrast": [1, 1e4], "bc": "mixed", "source": "constant"}"#,
    )
    .unwrap();
    cfg.validate().unwrap();
    let out = run_experiment(&ExperimentConfig { record_timings: false, ..cfg }).unwrap();
    assert_eq!(out.rows.len(), 8);
    assert!(out.rows.iter().all(|r| r.measurement().is_some()));
}

#[test]
fn binary_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"nf": 8, "nc": 2, "Nbf": 3, "osly": [1, 2], "contrast": [1, 100], "bc": "dirichlet", "source": "constant"}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let bin = env!("CARGO_BIN_EXE_mixcem");
    for verb in ["run", "snapshot", "decay"] {
        let status = Command::new(bin)
            .args([verb, cfg.to_str().unwrap(), "--workers", "1", "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success(), "{verb}");
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    for f in ["run.log", "e_sigma_nc2.svg", "e_u_nc2.svg", "decay.csv", "nc2_E1e0_reference_sigma11.csv", "nc2_E1e2_osly2_u2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("Lambda=") && log.contains("t_online="));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"nf": 8, "nc": 2, "osly": [1], "contrast": [1], "bc": "dirichlet", "typo": 1}"#).unwrap();
    let status = Command::new(bin).args(["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert!(!status.success());
}

#[test]
fn selftest_passes() {
    let status = Command::new(env!("CARGO_BIN_EXE_mixcem")).arg("selftest").status().unwrap();
    assert!(status.success());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
