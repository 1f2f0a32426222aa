use std::path::PathBuf;
use std::process::{Command, Output};

use patrol::scenario::{run_script, ScenarioErrorKind, ScenarioOptions};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn scenario(path: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patrol"))
        .arg("scenario")
        .arg(path)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn elevator_walkthrough_passes() {
    let out = scenario(&fixtures().join("woz_elevator.script"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("Overall severity: high."));
    assert!(stdout.contains("Overall severity: low."));
    assert!(stdout.contains("1. alice 7 points"));
}

#[test]
fn wrong_severity_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let original = std::fs::read_to_string(fixtures().join("woz_elevator.script")).unwrap();
    let broken = original.replacen("assert overall high", "assert overall low", 1);
    let line = broken
        .lines()
        .position(|l| l == "assert overall low")
        .unwrap()
        + 1;
    for f in ["demo.map", "woz_office.world"] {
        std::fs::copy(fixtures().join(f), dir.path().join(f)).unwrap();
    }
    let script = dir.path().join("broken.script");
    std::fs::write(&script, broken).unwrap();
    let out = scenario(&script);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&format!("line {line}")), "{stderr}");
    assert!(
        stderr.contains("overall severity is high, expected low"),
        "{stderr}"
    );
}

#[test]
fn empty_script_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("empty.script");
    std::fs::write(&script, "").unwrap();
    let out = scenario(&script);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_world_file_is_a_runtime_error() {
    let e = run_script(
        "world nowhere.world\nguest g\n",
        &ScenarioOptions {
            base_dir: fixtures(),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert_eq!(e.line, 2);
    assert!(matches!(e.kind, ScenarioErrorKind::Runtime(_)));
}

#[test]
fn runs_are_reproducible() {
    let text = std::fs::read_to_string(fixtures().join("woz_elevator.script")).unwrap();
    let opts = ScenarioOptions {
        base_dir: fixtures(),
        ..Default::default()
    };
    let a = run_script(&text, &opts).unwrap();
    let b = run_script(&text, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.updates.len(), 2);
    assert_eq!(a.advisories.len(), 2);
}
