//! End-to-end tests of the `fsi` binary: exit codes, output determinism,
//! config echo, snapshot files, and the fault-injection matrix.

use std::path::Path;
use std::process::{Command, Output};

use koiter_fsi::io::{parse_config, read_snapshot, SimConfig};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_fsi");

fn fsi(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("FSI_OUTPUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn fsi")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

/// 8×8×8 three-step run with zero data: cheapest full pipeline.
const ZERO_CFG: &str = r#"{
    "n_omega": 8, "n_depth": 8, "dt": 1e-3, "t_end": 3e-3,
    "output": { "snapshot_stride": 1 }
}"#;

#[test]
fn run_is_deterministic_and_echoes_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "cfg.json", ZERO_CFG);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");

    let ra = fsi(&["run", &cfg, "--out", out_a.to_str().unwrap()], &[]);
    assert_eq!(code(&ra), 0, "stderr: {}", String::from_utf8_lossy(&ra.stderr));
    assert!(String::from_utf8_lossy(&ra.stdout).contains("completed"));

    // FSI_OUTPUT_DIR overrides --out
    let rb = fsi(
        &["run", &cfg, "--out", tmp.path().join("ignored").to_str().unwrap()],
        &[("FSI_OUTPUT_DIR", out_b.to_str().unwrap())],
    );
    assert_eq!(code(&rb), 0);
    assert!(!tmp.path().join("ignored").exists());

    // reruns are byte-identical
    let la = std::fs::read(out_a.join("ledger.csv")).unwrap();
    let lb = std::fs::read(out_b.join("ledger.csv")).unwrap();
    assert_eq!(la, lb);

    // the echoed config parses back to the effective configuration
    let echoed: SimConfig =
        parse_config(&std::fs::read_to_string(out_a.join("config.json")).unwrap()).unwrap();
    let expect = parse_config(ZERO_CFG).unwrap();
    assert_eq!(echoed, expect);

    // snapshots were written every step and reload with the right shape
    for step in [1usize, 2, 3] {
        let snap = read_snapshot(&out_a.join(format!("snapshot_{step:06}.bin"))).unwrap();
        assert_eq!((snap.n1, snap.n2, snap.nx, snap.ny, snap.nz), (8, 8, 8, 8, 8));
        assert!(snap.eta.iter().all(|&x| x == 0.0));
    }

    // diagnostics over the stored snapshots
    let rd = fsi(&["diagnose", out_a.to_str().unwrap(), "--s", "0.25"], &[]);
    assert_eq!(code(&rd), 0, "stderr: {}", String::from_utf8_lossy(&rd.stderr));
    let diag = std::fs::read_to_string(out_a.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 4); // header + 3 snapshots
}

#[test]
fn invalid_config_exits_2_and_lists_violations() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{ "dt": -1e-3, "n_omega": 9, "viscosity": 0.0 }"#,
    );
    let out = fsi(&["run", &cfg], &[("FSI_OUTPUT_DIR", tmp.path().join("o").to_str().unwrap())]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["dt", "n_omega", "viscosity"] {
        assert!(err.contains(needle), "stderr missing {needle}: {err}");
    }

    // unparsable JSON is also a configuration error
    let cfg = write_config(tmp.path(), "garbage.json", "{ not json");
    let out = fsi(&["run", &cfg], &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn diagnose_argument_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = fsi(&["diagnose", tmp.path().to_str().unwrap(), "--s", "0.75"], &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("s"));

    // a run directory without snapshots
    let cfg = write_config(tmp.path(), "cfg.json", r#"{ "n_omega": 8, "n_depth": 8 }"#);
    std::fs::copy(&cfg, tmp.path().join("config.json")).unwrap();
    let out = fsi(&["diagnose", tmp.path().to_str().unwrap(), "--s", "0.25"], &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn collar_breach_exits_4() {
    // an admissible initial displacement driven outward by a large initial
    // shell velocity degenerates the ALE chart mid-run
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "breach.json",
        r#"{
            "n_omega": 8, "n_depth": 8, "dt": 1e-3, "t_end": 0.05,
            "initial": { "eta1": [ { "k1": 1, "k2": 0, "amp": 5.0 } ] },
            "tolerances": { "newton_tol": 1e-7 }
        }"#,
    );
    let out = fsi(&["run", &cfg], &[("FSI_OUTPUT_DIR", tmp.path().join("o").to_str().unwrap())]);
    assert_eq!(code(&out), 4, "stdout: {}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("collar breach"));
}

#[test]
fn coercivity_degeneration_exits_5() {
    // γ̃ ≡ 1 on the flat channel, so a floor above 1 must trip immediately
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "coercivity.json",
        r#"{
            "n_omega": 8, "n_depth": 8, "dt": 1e-3, "t_end": 0.01,
            "tolerances": { "gamma_min": 1.5 }
        }"#,
    );
    let out = fsi(&["run", &cfg], &[("FSI_OUTPUT_DIR", tmp.path().join("o").to_str().unwrap())]);
    assert_eq!(code(&out), 5, "stdout: {}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("coercivity"));
}

#[test]
fn validate_matrix_and_fault_injection() {
    let out = fsi(&["validate"], &[]);
    assert_eq!(code(&out), 0, "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("all 7 suites passed"));
    assert_eq!(text.matches("PASS").count(), 7);

    let out = fsi(&["validate", "--fault-simpson"], &[]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("FAIL simpson-telescoping"), "{text}");
    assert_eq!(text.matches("FAIL").count(), 1, "{text}");
}

#[test]
fn geometry_tables_print() {
    for kind in ["cylinder", "flat", "sphere-table"] {
        let out = fsi(&["geometry", kind], &[]);
        assert_eq!(code(&out), 0);
        assert!(String::from_utf8_lossy(&out.stdout).contains("closed form"));
    }
}
