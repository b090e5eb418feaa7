//! CLI surface: subcommands, file outputs, and exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqrlab"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lqrlab-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

const FULL_CONFIG: &str = r#"
algorithm = "ce"
horizons = [256]
seeds = [0]

[instance]
kind = "scaled_identity"
a = 0.5
d_x = 2
d_u = 2

[simulate]
t = 32
sigma_u = 0.5

[packing]
m = 2
eps_pack = 0.001
sign_seed = 5
"#;

#[test]
fn dare_prints_solution() {
    let dir = temp_dir("dare");
    let cfg = write_config(&dir, FULL_CONFIG);
    let out = bin().args(["dare", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("residual"));
    assert!(text.contains("J*"));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = temp_dir("simulate");
    let cfg = write_config(&dir, FULL_CONFIG);
    let out = bin()
        .args(["simulate", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("simulate_"))
        .expect("trajectory csv");
    let text = fs::read_to_string(csv.path()).unwrap();
    assert!(text.starts_with("t,x_0,x_1,u_0,u_1,cost"));
    assert_eq!(text.lines().count(), 33);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn run_ce_writes_ledger() {
    let dir = temp_dir("runce");
    let cfg = write_config(&dir, FULL_CONFIG);
    let out = bin()
        .args(["run-ce", "--seed", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("regret"));
    assert!(fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .any(|e| e.file_name().to_string_lossy().starts_with("ledger_")));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn packing_emits_json() {
    let dir = temp_dir("packing");
    let cfg = write_config(&dir, FULL_CONFIG);
    let out = bin()
        .args(["packing", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json_path = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().starts_with("packing_"))
        .expect("packing json");
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json_path.path()).unwrap()).unwrap();
    assert_eq!(parsed["eps_pack"].as_f64().unwrap(), 0.001);
    assert_eq!(parsed["e"].as_array().unwrap().len(), 2);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn sweep_runs_from_cli() {
    let dir = temp_dir("sweep");
    let cfg = write_config(&dir, FULL_CONFIG);
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 runs"));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn validation_failures_exit_2() {
    let dir = temp_dir("badcfg");
    let cfg = write_config(
        &dir,
        r#"
horizons = [100]
seeds = [0]

[instance]
kind = "scaled_identity"
a = 0.5
d_x = 2
d_u = 2
"#,
    );
    let out = bin().args(["dare", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // missing config is also a validation error
    let out = bin().args(["dare"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn numerical_failures_exit_3() {
    // an unstabilizable instance: unstable mode with no input authority
    let dir = temp_dir("unstab");
    let cfg = write_config(
        &dir,
        r#"
horizons = [256]
seeds = [0]

[instance]
kind = "inline"
a = [[2.0, 0.0], [0.0, 0.5]]
b = [[0.0], [1.0]]
"#,
    );
    let out = bin().args(["dare", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let _ = fs::remove_dir_all(dir);
}
