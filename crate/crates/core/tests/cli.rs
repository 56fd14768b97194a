//! The `relcoh` binary: exit codes and stage-tagged errors.

use std::path::Path;
use std::process::Command;

const GYRE: &str = r#"
[flow]
kind = "double-gyre"
tau = 1.0
step = 0.05
params = { A = 0.25, epsilon = 0.25, omega = 6.283185307179586 }

[domain]
rect = [0.0, 2.0, 0.0, 1.0]
cells = [8, 4]

[run]
n_points = 4000
max_depth = 2
"#;

fn relcoh(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_relcoh")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_render_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GYRE);
    let out = dir.path().join("b");
    let out = out.to_str().unwrap();
    let run = relcoh(&["run", "--config", &cfg, "--out", out, "--workers", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("root_status"));

    let svg = dir.path().join("x.svg");
    let r = relcoh(&["render", "--bundle", out, "--depth", "1", "--output", svg.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let v = relcoh(&["verify", "--bundle", out]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains("PASS stopping"));
}

#[test]
fn zero_points_fails_at_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GYRE.replace("n_points = 4000", "n_points = 0"));
    let out = relcoh(&["advect", "--config", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("relcoh: config:"), "{err}");
    assert!(err.contains("n_points"));
}

#[test]
fn bad_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GYRE);
    let out = relcoh(&["tree", "--config", &cfg, "--rho0", "1.5", "--out", "b"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho0"));
}

#[test]
fn advise_prints_the_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &GYRE.replace("tau = 1.0", "tau = 0.1"));
    let out = relcoh(&["advise", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("points_per_box = "));
    assert!(text.contains("safety_factor = 1.1"));
}
