//! JSON-lines run logs and the CSV summaries derived from them.
//!
//! The first line is a header; each episode then contributes a `t = 0` line
//! for the initial state and sensor value followed by one line per step.
//! Floats are written with 17 significant digits so logs replay bit-exactly.

use std::fmt::Write as _;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::pa_loop::Trajectory;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogHeader {
    pub digest: String,
    pub seed: u64,
    pub episodes: usize,
    pub steps: usize,
}

/// `{:.16e}`, or `null` for non-finite values.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "null".into(), |x| x.to_string())
}

pub fn header_line(h: &LogHeader) -> String {
    format!(
        "{{\"type\":\"header\",\"version\":\"{VERSION}\",\"config_digest\":\"{}\",\"seed\":{},\"episodes\":{},\"steps\":{}}}\n",
        h.digest, h.seed, h.episodes, h.steps
    )
}

pub fn episode_lines(episode: usize, tr: &Trajectory) -> String {
    let mut out = format!(
        "{{\"episode\":{episode},\"t\":0,\"e\":{},\"s\":{},\"a\":null,\"policy\":null,\"value_top\":null,\"vfe\":null,\"iterations\":null}}\n",
        tr.e0, tr.s0
    );
    for st in &tr.steps {
        let policy: Vec<String> = st.policy.probs().iter().map(|&p| real(p)).collect();
        let d = &st.diagnostics;
        let _ = writeln!(
            out,
            "{{\"episode\":{episode},\"t\":{},\"e\":{},\"s\":{},\"a\":{},\"policy\":[{}],\"value_top\":{},\"vfe\":{},\"iterations\":{}}}",
            st.t,
            st.e,
            st.s,
            st.a,
            policy.join(","),
            opt(d.value_top.map(real)),
            opt(d.vfe.map(real)),
            opt(d.iterations),
        );
    }
    out
}

fn bad(line: usize, what: &str) -> Error {
    Error::InvalidArgument(format!("log line {line}: {what}"))
}

fn real_field(rec: &Value, key: &str, line: usize) -> Result<String> {
    match &rec[key] {
        Value::Null => Ok(String::new()),
        v => v.as_f64().map(real).ok_or_else(|| bad(line, key)),
    }
}

/// Per-step CSV rows: the selected action, the top action value and its
/// running sum within the episode, the free energy and iteration count.
pub fn summarize_log(log: &str) -> Result<String> {
    let mut lines = log.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let header: Value = serde_json::from_str(first).map_err(|e| bad(1, &e.to_string()))?;
    if header["type"] != "header" {
        return Err(bad(1, "first line is not a header"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    w.write_record(["episode", "t", "a", "s", "e", "value_top", "cumulative_value", "vfe", "iterations"])
        .map_err(io)?;
    let mut cumulative = 0.0;
    for (i, text) in lines {
        let n = i + 1;
        let rec: Value = serde_json::from_str(text).map_err(|e| bad(n, &e.to_string()))?;
        let int = |key: &str| rec[key].as_u64().ok_or_else(|| bad(n, key));
        let t = int("t")?;
        if t == 0 {
            cumulative = 0.0;
            continue;
        }
        let value = real_field(&rec, "value_top", n)?;
        if let Some(v) = rec["value_top"].as_f64() {
            cumulative += v;
        }
        let iterations = rec["iterations"].as_u64().map_or(String::new(), |k| k.to_string());
        w.write_record([
            int("episode")?.to_string(),
            t.to_string(),
            int("a")?.to_string(),
            int("s")?.to_string(),
            int("e")?.to_string(),
            value,
            real(cumulative),
            real_field(&rec, "vfe", n)?,
            iterations,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of ascii fields"))
}
