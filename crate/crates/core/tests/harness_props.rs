use std::path::PathBuf;

use paip::harness::commands::{summary_path, EXIT_COMPLEXITY, EXIT_CONFIG, EXIT_EMPTY_SUITE, EXIT_OTHER};
use paip::harness::{
    check_summary, evaluate_command, load_config, oracle_command, parse_config, run_command, write_run,
    CommandError, OracleOptions,
};
use paip::par::Exec;
use serde_json::Value;
use sha2::{Digest, Sha256};

fn shipped() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    assert!(!paths.is_empty());
    paths
}

const CONSTANT: &str = r#"{
    "environment": {"builtin": "flip-2"},
    "model": {"horizon": {"fixed": 3}},
    "agent": {"inference": "exact", "motivation": {"kind": "constant", "value": 1.5}, "selection": {"mode": "softmax", "gamma": 2.0}},
    "run": {"steps": 2, "episodes": 1, "seed": 0}
}"#;

#[test]
fn shipped_configs_replay_in_every_mode() {
    for path in shipped() {
        let cfg = load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(cfg.digest, hex::encode(Sha256::digest(&bytes)));

        let a = run_command(&cfg, Exec::Sequential).unwrap();
        let b = run_command(&cfg, Exec::Parallel).unwrap();
        let c = run_command(&load_config(&path).unwrap(), Exec::Parallel).unwrap();
        assert_eq!(a, b, "{}", path.display());
        assert_eq!(a, c, "{}", path.display());

        let lines: Vec<Value> = a.log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 1 + cfg.run.episodes * (cfg.run.steps + 1));
        assert_eq!(lines[0]["config_digest"], cfg.digest.as_str());
        assert_eq!(lines[0]["seed"], cfg.run.seed);
        for rec in &lines[1..] {
            if rec["t"] == 0 {
                assert!(rec["policy"].is_null());
                continue;
            }
            let sum: f64 = rec["policy"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12, "{}: {rec}", path.display());
        }
    }
}

#[test]
fn summaries_are_rederived_from_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&shipped()[0]).unwrap();
    let out = run_command(&cfg, Exec::default()).unwrap();
    let log = dir.path().join("run.jsonl");
    write_run(&log, &out).unwrap();
    check_summary(&log).unwrap();

    let csv = summary_path(&log);
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("0,99,0,0,0,,,,\n");
    std::fs::write(&csv, text).unwrap();
    let err = check_summary(&log).unwrap_err();
    assert!(matches!(err, CommandError::Mismatch(_)));
    assert_eq!(err.exit_code(), EXIT_OTHER);
}

#[test]
fn constant_motivation_values_are_equal() {
    let cfg = parse_config(CONSTANT).unwrap();
    let out = evaluate_command(&cfg, "0").unwrap();
    let values: Vec<&str> = out.lines().filter(|l| l.starts_with("value,")).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(values.len(), 8);
    assert!(values.iter().all(|v| *v == values[0]));
    let policy: Vec<f64> = out
        .lines()
        .filter(|l| l.starts_with("policy,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(policy.len(), 2);
    assert!(policy.iter().all(|p| (p - 0.5).abs() < 1e-12));
}

#[test]
fn known_chain_ranks_moving_right_first() {
    let path = shipped().into_iter().find(|p| p.ends_with("chain4_fep.json")).unwrap();
    let text = std::fs::read_to_string(path).unwrap().replace(r#"{"symmetric": 1.0}"#, r#"{"environment": "known"}"#);
    let cfg = parse_config(&text).unwrap();
    let out = evaluate_command(&cfg, "0 1 1").unwrap();
    let top = out.lines().nth(1).unwrap();
    assert!(top.starts_with("value,1 1 1,"), "{out}");
}

#[test]
fn refusals_map_to_exit_codes() {
    let big = CONSTANT.replace(r#""fixed": 3"#, r#""fixed": 30"#);
    let err = run_command(&parse_config(&big).unwrap(), Exec::Sequential).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_COMPLEXITY, "{err}");

    let bad = CONSTANT.replace(r#""steps": 2"#, r#""steps": "two""#);
    let err = CommandError::from(parse_config(&bad).unwrap_err());
    assert_eq!(err.exit_code(), EXIT_CONFIG);

    let opts = OracleOptions {
        suites: Some(vec![]),
        ..OracleOptions::default()
    };
    assert_eq!(oracle_command(None, &opts).unwrap_err().exit_code(), EXIT_EMPTY_SUITE);
}

#[test]
fn history_outside_the_spaces_is_rejected() {
    let cfg = parse_config(CONSTANT).unwrap();
    assert!(evaluate_command(&cfg, "0 5 1").is_err());
    assert!(evaluate_command(&cfg, "0 1").is_err());
}
