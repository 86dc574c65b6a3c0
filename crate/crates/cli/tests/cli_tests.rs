//! End-to-end CLI checks: exit codes, artifact schema, determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavetank"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const REST: &str = r#"
schema = 1
kind = "simulate"

[tank]
l1 = 3.141592653589793
h = 1.0
d = 1
n1 = 16
nz = 16
dt = 0.02

[simulate]
amplitude = 0.0
periods = 1.0
steps_per_period = 20
"#;

#[test]
fn rest_simulation_exits_zero_with_zero_series() {
    let dir = tempdir("rest");
    let cfg = dir.join("run.toml");
    write(&cfg, REST);
    let out = dir.join("out");
    let status = bin().arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let results = fs::read_to_string(out.join("results.txt")).unwrap();
    assert!(results.starts_with("schema=1\n"));
    assert!(results.contains("pass=true"));
    assert!(results.contains("energy_drift_rel=0.0000000000000000e0"));
    let series = fs::read_to_string(out.join("series.dat")).unwrap();
    assert!(series.starts_with("# columns: t energy"));
    // every energy sample is exactly zero
    for line in series.lines().skip(1) {
        let energy: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert_eq!(energy, 0.0);
    }
    assert!(out.join("summary.txt").exists());
}

#[test]
fn malformed_config_exits_two_without_artifacts() {
    let dir = tempdir("bad");
    let cfg = dir.join("bad.toml");
    write(
        &cfg,
        r#"
schema = 1
kind = "simulate"

[tank]
l1 = 1.0
h = -1.0
n1 = 16
nz = 16
dt = 0.01
"#,
    );
    let out = dir.join("out");
    let status = bin().arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());

    // unknown kind from the command line is also a usage error
    let cfg2 = dir.join("rest.toml");
    write(&cfg2, REST);
    let status2 = bin()
        .arg(&cfg2)
        .arg("--kind")
        .arg("nonsense")
        .status()
        .unwrap();
    assert_eq!(status2.code(), Some(2));
}

#[test]
fn identity_run_is_deterministic() {
    let dir = tempdir("det");
    let cfg = dir.join("run.toml");
    write(
        &cfg,
        r#"
schema = 1
kind = "main-identity"
seed = 3

[tank]
l1 = 3.141592653589793
h = 1.0
d = 1
n1 = 16
nz = 24

[simulate]
mode_n = 1
amplitude = 1e-3
periods = 0.5
steps_per_period = 40

[tolerances]
identity = 1e-4
"#,
    );
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    assert!(bin().arg(&cfg).arg("--out").arg(&out1).status().unwrap().success());
    assert!(bin().arg(&cfg).arg("--out").arg(&out2).status().unwrap().success());
    for name in ["results.txt", "series.dat", "identity_accumulation.dat", "summary.txt"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn kind_override_changes_the_run() {
    let dir = tempdir("override");
    let cfg = dir.join("run.toml");
    write(&cfg, REST);
    let out = dir.join("out");
    let status = bin()
        .arg(&cfg)
        .arg("--kind")
        .arg("pohozaev")
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let results = fs::read_to_string(out.join("results.txt")).unwrap();
    assert!(results.contains("kind=pohozaev"));
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("wavetank_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}
