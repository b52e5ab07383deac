use std::path::Path;
use std::process::Command;

fn fastslow(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fastslow"))
        .args(args)
        .current_dir(dir)
        .env_remove("FASTSLOW_CONFIG")
        .env_remove("FASTSLOW_SEED")
        .env_remove("FASTSLOW_WORKERS")
        .env_remove("FASTSLOW_OUT")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn preset_list_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = fastslow(&["preset", "list"], dir.path());
    assert_eq!(code, 0);
    for name in ["hopf", "so3_interpolation", "so4_hypoelliptic"] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{out}");
    }
    let (code, out, _) = fastslow(&["preset", "show", "hopf"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("SU(2)"), "{out}");
    let (code, _, err) = fastslow(&["preset", "show", "nope"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("nope"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fastslow(&["frobnicate"], dir.path()).0, 1);
    assert_eq!(fastslow(&["simulate"], dir.path()).0, 1);
    let cfg = write_config(dir.path(), "preset = \"hopf\"\nepsilon = 3.0\n");
    let (code, _, err) = fastslow(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("epsilon"), "{err}");
    let cfg = write_config(dir.path(), "preset = \"no_such_preset\"\n");
    assert_eq!(fastslow(&["simulate", "--config", &cfg], dir.path()).0, 1);
}

#[test]
fn simulate_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "preset = \"hopf\"\nT = 0.5\npaths = 50\n");
    let (code, _, err) = fastslow(
        &["simulate", "--config", &cfg, "--seed", "9", "--out", "o"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("o/simulate.csv")).unwrap();
    assert!(csv.contains("# master_seed = 9"));
    assert!(csv.contains("# config_digest = "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 51);
}

#[test]
fn seed_and_workers_do_not_change_the_digest_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "preset = \"hopf\"\nT = 0.5\npaths = 40\n");
    fastslow(
        &["simulate", "--config", &cfg, "--out", "a", "--workers", "1"],
        dir.path(),
    );
    fastslow(
        &["simulate", "--config", &cfg, "--out", "b", "--workers", "2"],
        dir.path(),
    );
    let a = std::fs::read(dir.path().join("a/simulate.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/simulate.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn hormander_command_reports_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "preset = \"so4_hypoelliptic\"\n");
    let (code, out, _) = fastslow(&["hormander", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("satisfied, dim 3"), "{out}");
}
