use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn paip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paip")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_a_log_and_matching_summary() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("chain.jsonl");
    let log_s = log.display().to_string();
    let cfg = config("chain4_fep.json");
    let out = paip(&["run", "--config", &cfg, "--out", &log_s, "--workers", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(log.with_extension("csv").exists());
    assert_eq!(code(&paip(&["validate", "--log", &log_s])), 0);

    let printed = paip(&["run", "--config", &cfg, "--workers", "1"]);
    assert_eq!(printed.stdout, std::fs::read(&log).unwrap());

    let reseeded = paip(&["run", "--config", &cfg, "--seed", "8"]);
    assert_eq!(code(&reseeded), 0);
    assert!(String::from_utf8_lossy(&reseeded.stdout).lines().next().unwrap().contains("\"seed\":8"));
}

#[test]
fn evaluate_prints_one_row_per_sequence() {
    let out = paip(&["evaluate", "--config", &config("flip2_ksa.json"), "--history", "0 1 1"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("value,")).count(), 4);
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"environment": {"builtin": "maze-9"}}"#);
    let out = paip(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("environment.builtin") && err.contains("run"), "{err}");
    assert_eq!(code(&paip(&["run", "--config", "/nonexistent/config.json"])), 4);
}

#[test]
fn complexity_refusal_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("chain4_fep.json"))
        .unwrap()
        .replace(r#""sliding": 2"#, r#""sliding": 30"#);
    let cfg = write(dir.path(), "big.json", &text);
    let out = paip(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_suites_and_exit_codes() {
    let out = paip(&["oracle", "--suites", "information,capacity_grid"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&paip(&["oracle", "--suites", ""])), 5);
    let corrupted = paip(&["oracle", "--suites", "polya_closed_form", "--max-t", "2", "--corrupt-prior"]);
    assert_eq!(code(&corrupted), 1);
    assert!(String::from_utf8_lossy(&corrupted.stderr).contains("failed"));
}

#[test]
fn check_flag_runs_the_full_suite() {
    let out = paip(&["--check"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}
