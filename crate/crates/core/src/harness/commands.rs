//! The four harness commands. Each returns its output as text; writing
//! files and mapping errors to exit codes is left to the caller.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ConfigError, ExperimentConfig};
use super::log::{episode_lines, header_line, real, summarize_log, LogHeader};
use super::oracle::{run_oracles, OracleOptions, OracleReport};
use crate::agent::BayesAgent;
use crate::error::Error;
use crate::pa_loop::{run_episodes, History};
use crate::par::Exec;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_COMPLEXITY: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_EMPTY_SUITE: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("oracle checks failed:\n{0}")]
    OracleFailed(OracleReport),
    #[error("no oracle suites selected")]
    EmptySuite,
    #[error("{0}")]
    Mismatch(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => EXIT_CONFIG,
            CommandError::Run(e) if e.is_complexity() => EXIT_COMPLEXITY,
            CommandError::Run(e) if e.is_non_convergence() => EXIT_NON_CONVERGENCE,
            CommandError::EmptySuite => EXIT_EMPTY_SUITE,
            _ => EXIT_OTHER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub log: String,
    pub csv: String,
}

/// Runs every episode and renders the log and its summary. Episodes are
/// independent (one rng stream each), so `exec` does not change the output.
pub fn run_command(cfg: &ExperimentConfig, exec: Exec) -> Result<RunOutput, CommandError> {
    let header = LogHeader {
        digest: cfg.digest.clone(),
        seed: cfg.run.seed,
        episodes: cfg.run.episodes,
        steps: cfg.run.steps,
    };
    let mut log = header_line(&header);
    let results = run_episodes(
        &cfg.environment,
        || BayesAgent::new(cfg.prior.clone(), cfg.agent.clone()),
        cfg.run.steps,
        cfg.run.episodes,
        cfg.run.seed,
        exec,
    );
    for (k, r) in results.into_iter().enumerate() {
        let tr = r.map_err(|e| {
            log::error!("episode {k}: {e}");
            e
        })?;
        log.push_str(&episode_lines(k, &tr));
    }
    let csv = summarize_log(&log)?;
    Ok(RunOutput { log, csv })
}

/// The CSV written next to a log.
pub fn summary_path(log_path: &Path) -> PathBuf {
    log_path.with_extension("csv")
}

pub fn write_run(out: &Path, output: &RunOutput) -> Result<(), CommandError> {
    let write = |p: &Path, text: &str| {
        std::fs::write(p, text).map_err(|source| CommandError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    write(out, &output.log)?;
    write(&summary_path(out), &output.csv)
}

/// Action values of every sequence after a history, best first, followed by
/// the configured selection's policy over the next action.
pub fn evaluate_command(cfg: &ExperimentConfig, history: &str) -> Result<String, CommandError> {
    let h = History::parse(history)?;
    let sp = cfg.prior.spaces;
    h.check_spaces(sp.n_sensor, sp.n_action)?;
    let mut agent = BayesAgent::new(cfg.prior.clone(), cfg.agent.clone());
    let ev = agent.evaluate(&h)?;
    let mut out = String::from("kind,sequence,value\n");
    for (seq, v) in ev.table.sorted_desc() {
        let seq: Vec<String> = seq.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "value,{},{}", seq.join(" "), real(v));
    }
    for (a, p) in ev.policy.probs().iter().enumerate() {
        let _ = writeln!(out, "policy,{a},{}", real(*p));
    }
    Ok(out)
}

/// Runs the oracle suites. With a config, the enumeration checks use its
/// prior instead of the shipped instances.
pub fn oracle_command(cfg: Option<&ExperimentConfig>, opts: &OracleOptions) -> Result<OracleReport, CommandError> {
    if opts.suites.as_ref().is_some_and(|s| s.is_empty()) {
        return Err(CommandError::EmptySuite);
    }
    let priors = cfg.map(|c| vec![(*c.prior).clone()]);
    let report = run_oracles(priors.as_deref(), opts)?;
    if report.passed() {
        Ok(report)
    } else {
        Err(CommandError::OracleFailed(report))
    }
}

/// Re-derives the CSV summary of a log and compares it with the file next
/// to it.
pub fn check_summary(log_path: &Path) -> Result<(), CommandError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| CommandError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let log = read(log_path)?;
    let csv_path = summary_path(log_path);
    let expected = read(&csv_path)?;
    if summarize_log(&log)? == expected {
        Ok(())
    } else {
        Err(CommandError::Mismatch(format!(
            "{} does not match the summary derived from {}",
            csv_path.display(),
            log_path.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    const CHAIN: &str = r#"{
        "environment": {"builtin": "chain-4"},
        "model": {"prior": {"symmetric": 1.0}, "horizon": {"sliding": 2}},
        "agent": {
            "inference": "exact",
            "motivation": {"kind": "fep", "desired": {"delta": 3, "smoothing": 1e-6}},
            "selection": {"mode": "argmax"}
        },
        "run": {"steps": 5, "episodes": 2, "seed": 7}
    }"#;

    #[test]
    fn run_is_deterministic() {
        let cfg = parse_config(CHAIN).unwrap();
        let a = run_command(&cfg, Exec::Sequential).unwrap();
        let b = run_command(&cfg, Exec::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.lines().count(), 1 + 2 * 6);
    }

    #[test]
    fn zero_episodes_keep_the_header() {
        let cfg = parse_config(&CHAIN.replace(r#""episodes": 2"#, r#""episodes": 0"#)).unwrap();
        let out = run_command(&cfg, Exec::Sequential).unwrap();
        assert_eq!(out.log.lines().count(), 1);
        assert!(out.log.contains(&cfg.digest));
    }

    #[test]
    fn cap_refusal_exits_2() {
        let text = CHAIN
            .replace(r#""sliding": 2"#, r#""sliding": 6"#)
            .replace(r#""run":"#, r#""caps": {"entries": 1000}, "run":"#);
        let cfg = parse_config(&text).unwrap();
        let err = run_command(&cfg, Exec::Sequential).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_COMPLEXITY, "{err}");
    }

    #[test]
    fn evaluate_lists_every_sequence() {
        let cfg = parse_config(CHAIN).unwrap();
        let out = evaluate_command(&cfg, "0").unwrap();
        let values = out.lines().filter(|l| l.starts_with("value,")).count();
        assert_eq!(values, 8);
        let policy = out.lines().filter(|l| l.starts_with("policy,")).count();
        assert_eq!(policy, 2);
    }
}
