//! Experiment configuration: a JSON document with `environment`, `model`,
//! `agent`, `run`, `caps` and `tolerances` sections.
//!
//! Validation walks the whole document and reports every violation with its
//! field path, so a config can be fixed in one pass.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::builtins::builtin;
use crate::active::GammaParams;
use crate::agent::{ActiveSettings, AgentConfig, Inference};
use crate::model::{Block, BlockSet, DesiredPrior, HorizonRule, ModelPrior, ModelSpaces, ParamBelief};
use crate::motivation::{FepSettings, InfoGainSettings, Motivation, ThetaAtoms};
use crate::pa_loop::EnvironmentSpec;
use crate::prob::{Categorical, ConditionalTable, DirichletParams};
use crate::select::Selection;
use crate::variational::CaviOptions;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{} validation error(s):\n  {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Validation(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Validation(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub steps: usize,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    /// Builtin name, if the environment was given by name.
    pub environment_name: Option<String>,
    pub prior: Arc<ModelPrior>,
    pub agent: Arc<AgentConfig>,
    pub run: RunSettings,
    /// Hex SHA-256 of the config bytes.
    pub digest: String,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    let mut c = Checker::default();
    let cfg = c.experiment(&doc, digest);
    match cfg {
        Some(cfg) if c.violations.is_empty() => Ok(cfg),
        _ => Err(ConfigError::Validation(c.violations)),
    }
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn index(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

impl Checker {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, path: &str, v: &'a Value, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        let Some(m) = v.as_object() else {
            self.fail(path, "expected an object");
            return None;
        };
        for key in m.keys() {
            if !allowed.contains(&key.as_str()) {
                self.fail(&join(path, key), format!("unknown field; expected one of {}", allowed.join(", ")));
            }
        }
        Some(m)
    }

    fn required<'a>(&mut self, path: &str, m: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
        let v = m.get(key);
        if v.is_none() {
            self.fail(&join(path, key), "missing field");
        }
        v
    }

    fn usize(&mut self, path: &str, v: &Value) -> Option<usize> {
        let n = v.as_u64().and_then(|n| usize::try_from(n).ok());
        if n.is_none() {
            self.fail(path, "expected a non-negative integer");
        }
        n
    }

    fn positive_usize(&mut self, path: &str, v: &Value) -> Option<usize> {
        match self.usize(path, v)? {
            0 => {
                self.fail(path, "must be at least 1");
                None
            }
            n => Some(n),
        }
    }

    fn real(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(path, "expected a finite number");
                None
            }
        }
    }

    fn positive(&mut self, path: &str, v: &Value) -> Option<f64> {
        let x = self.real(path, v)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.fail(path, format!("must be positive, got {x}"));
            None
        }
    }

    fn boolean(&mut self, path: &str, v: &Value) -> Option<bool> {
        let b = v.as_bool();
        if b.is_none() {
            self.fail(path, "expected true or false");
        }
        b
    }

    fn optional<T>(&mut self, path: &str, m: &Map<String, Value>, key: &str, default: T, f: impl FnOnce(&mut Self, &str, &Value) -> Option<T>) -> Option<T> {
        match m.get(key) {
            None => Some(default),
            Some(v) => f(self, &join(path, key), v),
        }
    }

    fn vector(&mut self, path: &str, v: &Value) -> Option<Vec<f64>> {
        let Some(items) = v.as_array() else {
            self.fail(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (i, x) in items.iter().enumerate() {
            match self.real(&index(path, i), x) {
                Some(x) => out.push(x),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn categorical(&mut self, path: &str, v: &Value) -> Option<Categorical> {
        let p = self.vector(path, v)?;
        if p.is_empty() {
            self.fail(path, "distribution over an empty set");
            return None;
        }
        if let Some(x) = p.iter().find(|x| **x < 0.0) {
            self.fail(path, format!("negative probability {x}"));
            return None;
        }
        let total: f64 = p.iter().sum();
        match Categorical::new(p) {
            Ok(c) => Some(c),
            Err(_) => {
                self.fail(path, format!("row sums to {total}, not 1"));
                None
            }
        }
    }

    fn table(&mut self, path: &str, v: &Value, rows: usize, cols: usize) -> Option<ConditionalTable> {
        let Some(items) = v.as_array() else {
            self.fail(path, "expected an array of rows");
            return None;
        };
        if items.len() != rows {
            self.fail(path, format!("expected {rows} rows, found {}", items.len()));
        }
        let mut out = Vec::with_capacity(items.len());
        let mut ok = items.len() == rows;
        for (i, row) in items.iter().enumerate() {
            let p = index(path, i);
            match self.categorical(&p, row) {
                Some(c) if c.len() == cols => out.push(c),
                Some(c) => {
                    self.fail(&p, format!("expected {cols} entries, found {}", c.len()));
                    ok = false;
                }
                None => ok = false,
            }
        }
        if ok {
            ConditionalTable::new(out).ok()
        } else {
            None
        }
    }

    fn experiment(&mut self, doc: &Value, digest: String) -> Option<ExperimentConfig> {
        let root = self.object("", doc, &["environment", "model", "agent", "run", "caps", "tolerances"])?;
        let env = self
            .required("", root, "environment")
            .and_then(|v| self.environment(v));
        let caps = match root.get("caps") {
            Some(v) => self.caps(v),
            None => Some(Caps::default()),
        };
        let allow = match root.get("tolerances") {
            Some(v) => self.tolerances(v),
            None => Some(false),
        };
        let run = self.required("", root, "run").and_then(|v| self.run(v));
        // Model and agent checks need the environment's spaces.
        let (env, name) = env?;
        let (prior, horizon) = self
            .required("", root, "model")
            .and_then(|v| self.model(v, &env))?;
        let n_sensor = env.n_sensor();
        let agent = self
            .required("", root, "agent")
            .and_then(|v| self.agent(v, n_sensor, horizon, &prior));
        let (mut agent, caps, allow, run) = (agent?, caps?, allow?, run?);
        agent.cap = caps.entries;
        agent.sequence_cap = caps.sequences;
        agent.allow_nonconvergence = allow;
        Some(ExperimentConfig {
            environment: env,
            environment_name: name,
            prior: Arc::new(prior),
            agent: Arc::new(agent),
            run,
            digest,
        })
    }

    fn environment(&mut self, v: &Value) -> Option<(EnvironmentSpec, Option<String>)> {
        let path = "environment";
        let m = self.object(path, v, &["builtin", "initial", "transition", "sensor", "n_action"])?;
        if let Some(name) = m.get("builtin") {
            if m.len() > 1 {
                self.fail(path, "a builtin environment takes no tables");
            }
            let Some(name) = name.as_str() else {
                self.fail(&join(path, "builtin"), "expected a name");
                return None;
            };
            return match builtin(name) {
                Ok(env) => Some((env, Some(name.to_string()))),
                Err(e) => {
                    self.fail(&join(path, "builtin"), e.to_string());
                    None
                }
            };
        }
        let initial = self
            .required(path, m, "initial")
            .and_then(|v| self.categorical(&join(path, "initial"), v));
        let n_action = self
            .required(path, m, "n_action")
            .and_then(|v| self.positive_usize(&join(path, "n_action"), v));
        let n_sensor = m
            .get("sensor")
            .and_then(|v| v.as_array())
            .and_then(|rows| rows.first())
            .and_then(|r| r.as_array())
            .map_or(0, |r| r.len());
        let (initial, n_action) = (initial?, n_action?);
        let n_env = initial.len();
        let transition = self
            .required(path, m, "transition")
            .and_then(|v| self.table(&join(path, "transition"), v, n_action * n_env, n_env));
        let sensor = self
            .required(path, m, "sensor")
            .and_then(|v| self.table(&join(path, "sensor"), v, n_env, n_sensor));
        let env = EnvironmentSpec::new(initial, transition?, sensor?, n_action);
        match env {
            Ok(env) => Some((env, None)),
            Err(e) => {
                self.fail(path, e.to_string());
                None
            }
        }
    }

    fn model(&mut self, v: &Value, env: &EnvironmentSpec) -> Option<(ModelPrior, HorizonRule)> {
        let path = "model";
        let m = self.object(path, v, &["n_env", "prior", "horizon"])?;
        let n_env = self.optional(path, m, "n_env", env.n_env(), |c, p, v| c.positive_usize(p, v));
        let horizon = self
            .required(path, m, "horizon")
            .and_then(|v| self.horizon(&join(path, "horizon"), v));
        let spaces = ModelSpaces::new(n_env?, env.n_sensor(), env.n_action).ok()?;
        let prior_path = join(path, "prior");
        let prior = match m.get("prior") {
            None => ModelPrior::symmetric(spaces, 1.0).ok(),
            Some(v) => self.prior(&prior_path, v, spaces, env),
        };
        Some((prior?, horizon?))
    }

    fn horizon(&mut self, path: &str, v: &Value) -> Option<HorizonRule> {
        let m = self.object(path, v, &["fixed", "sliding"])?;
        match (m.get("fixed"), m.get("sliding")) {
            (Some(t), None) => self.positive_usize(&join(path, "fixed"), t).map(HorizonRule::Fixed),
            (None, Some(n)) => self.positive_usize(&join(path, "sliding"), n).map(HorizonRule::Sliding),
            _ => {
                self.fail(path, "give exactly one of fixed, sliding");
                None
            }
        }
    }

    fn prior(&mut self, path: &str, v: &Value, spaces: ModelSpaces, env: &EnvironmentSpec) -> Option<ModelPrior> {
        if let Some(parts) = v.get("mixture") {
            self.object(path, v, &["mixture"])?;
            let mpath = join(path, "mixture");
            let Some(items) = parts.as_array().filter(|a| !a.is_empty()) else {
                self.fail(&mpath, "expected a non-empty array of components");
                return None;
            };
            let mut weights = Vec::new();
            let mut beliefs = Vec::new();
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                let p = index(&mpath, i);
                let Some(m) = self.object(&p, item, &["weight", "prior"]) else {
                    ok = false;
                    continue;
                };
                let w = self.required(&p, m, "weight").and_then(|w| self.positive(&join(&p, "weight"), w));
                let b = self
                    .required(&p, m, "prior")
                    .and_then(|b| self.belief(&join(&p, "prior"), b, spaces, env));
                match (w, b) {
                    (Some(w), Some(b)) => {
                        weights.push(w);
                        beliefs.push(b);
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                return None;
            }
            let weights = Categorical::from_weights(weights).ok()?;
            return match ModelPrior::mixture(spaces, weights, beliefs) {
                Ok(p) => Some(p),
                Err(e) => {
                    self.fail(path, e.to_string());
                    None
                }
            };
        }
        let belief = self.belief(path, v, spaces, env)?;
        ModelPrior::single(spaces, belief).ok()
    }

    fn belief(&mut self, path: &str, v: &Value, spaces: ModelSpaces, env: &EnvironmentSpec) -> Option<ParamBelief> {
        let m = self.object(path, v, &["symmetric", "dirichlet", "environment"])?;
        if m.len() != 1 {
            self.fail(path, "give exactly one of symmetric, dirichlet, environment");
            return None;
        }
        if let Some(c) = m.get("symmetric") {
            let c = self.positive(&join(path, "symmetric"), c)?;
            return ParamBelief::symmetric(&spaces, c).ok();
        }
        if let Some(e) = m.get("environment") {
            let p = join(path, "environment");
            if spaces.n_env != env.n_env() {
                self.fail(&p, format!("model has {} states, environment has {}", spaces.n_env, env.n_env()));
                return None;
            }
            let tables = [
                &env.sensor,
                &env.transition,
                &ConditionalTable::new(vec![env.initial.clone()]).expect("one stochastic row"),
            ]
            .map(|t| t.clone());
            let blocks: Vec<Block> = if e.as_str() == Some("known") {
                tables.into_iter().map(Block::known).collect()
            } else {
                let m = self.object(&p, e, &["scale", "floor"])?;
                let scale = self.required(&p, m, "scale").and_then(|v| self.positive(&join(&p, "scale"), v));
                let floor = self.required(&p, m, "floor").and_then(|v| self.positive(&join(&p, "floor"), v));
                let (scale, floor) = (scale?, floor?);
                tables
                    .iter()
                    .map(|t| Block::concentrated(t, scale, floor))
                    .collect::<crate::Result<_>>()
                    .ok()?
            };
            let [sensor, transition, initial]: [Block; 3] = blocks.try_into().ok()?;
            return ParamBelief::new(&spaces, sensor, transition, initial).ok();
        }
        let p = join(path, "dirichlet");
        let m = self.object(&p, &m["dirichlet"], &["sensor", "transition", "initial"])?;
        let shapes = [
            ("sensor", spaces.n_env, spaces.n_sensor),
            ("transition", spaces.n_action * spaces.n_env, spaces.n_env),
            ("initial", 1, spaces.n_env),
        ];
        let mut blocks = Vec::new();
        for (key, rows, cols) in shapes {
            let bp = join(&p, key);
            if let Some(b) = self.required(&p, m, key).and_then(|v| self.block(&bp, v, rows, cols)) {
                blocks.push(b);
            }
        }
        let [sensor, transition, initial]: [Block; 3] = blocks.try_into().ok()?;
        ParamBelief::new(&spaces, sensor, transition, initial).ok()
    }

    /// A block is an array of concentration rows or `{"known": table}`.
    fn block(&mut self, path: &str, v: &Value, rows: usize, cols: usize) -> Option<Block> {
        if let Some(m) = v.as_object() {
            self.object(path, v, &["known"])?;
            let t = self
                .required(path, m, "known")
                .and_then(|t| self.table(&join(path, "known"), t, rows, cols))?;
            return Some(Block::known(t));
        }
        let Some(items) = v.as_array() else {
            self.fail(path, "expected concentration rows or {\"known\": table}");
            return None;
        };
        if items.len() != rows {
            self.fail(path, format!("expected {rows} rows, found {}", items.len()));
            return None;
        }
        let mut params = Vec::with_capacity(rows);
        for (i, row) in items.iter().enumerate() {
            let p = index(path, i);
            let alpha = self.vector(&p, row)?;
            if alpha.len() != cols {
                self.fail(&p, format!("expected {cols} entries, found {}", alpha.len()));
                return None;
            }
            match DirichletParams::new(alpha) {
                Ok(d) => params.push(d),
                Err(e) => {
                    self.fail(&p, e.to_string());
                    return None;
                }
            }
        }
        Block::dirichlet(&params).ok()
    }

    fn agent(&mut self, v: &Value, n_sensor: usize, horizon: HorizonRule, prior: &ModelPrior) -> Option<AgentConfig> {
        let path = "agent";
        let m = self.object(path, v, &["inference", "motivation", "selection", "cavi", "active"])?;
        let inference = self.required(path, m, "inference").and_then(|v| {
            let p = join(path, "inference");
            match v.as_str() {
                Some("exact") => Some(Inference::Exact),
                Some("variational") => Some(Inference::Variational),
                Some("active") => Some(Inference::Active(ActiveSettings::default())),
                _ => {
                    self.fail(&p, "expected one of exact, variational, active");
                    None
                }
            }
        });
        let motivation = self
            .required(path, m, "motivation")
            .and_then(|v| self.motivation(&join(path, "motivation"), v, n_sensor));
        let selection = self
            .required(path, m, "selection")
            .and_then(|v| self.selection(&join(path, "selection"), v));
        let cavi = match m.get("cavi") {
            Some(v) => self.cavi(&join(path, "cavi"), v),
            None => Some(CaviOptions::default()),
        };
        let active = match m.get("active") {
            Some(v) => self.active(&join(path, "active"), v),
            None => Some(ActiveSettings::default()),
        };
        let (mut inference, motivation, selection, cavi, active) = (inference?, motivation?, selection?, cavi?, active?);
        if let Inference::Active(s) = &mut inference {
            *s = active;
        } else if m.contains_key("active") {
            self.fail(&join(path, "active"), "only used with active inference");
        }
        if !matches!(inference, Inference::Exact) && prior.components.len() > 1 {
            self.fail(&join(path, "inference"), "variational and active inference need a single-component prior");
        }
        if selection == Selection::Thompson {
            if matches!(inference, Inference::Active(_)) {
                self.fail(&join(path, "selection"), "Thompson sampling is not defined for active inference");
            }
            if motivation.uses_parameter_posterior() {
                self.fail(
                    &join(path, "selection"),
                    format!("Thompson sampling fixes the parameters, so {} has nothing to learn", motivation.name()),
                );
            }
        }
        if let Err(e) = motivation.action_len(horizon.future_len(1).max(1)) {
            self.fail(&join(path, "motivation"), e.to_string());
        }
        let mut cfg = AgentConfig::new(inference, motivation, selection, horizon);
        cfg.cavi = cavi;
        Some(cfg)
    }

    fn selection(&mut self, path: &str, v: &Value) -> Option<Selection> {
        let m = self.object(path, v, &["mode", "gamma"])?;
        let mode = self.required(path, m, "mode")?;
        match mode.as_str() {
            Some("argmax") => Some(Selection::Argmax),
            Some("thompson") => Some(Selection::Thompson),
            Some("softmax") => self
                .required(path, m, "gamma")
                .and_then(|g| self.positive(&join(path, "gamma"), g))
                .map(|gamma| Selection::Softmax { gamma }),
            _ => {
                self.fail(&join(path, "mode"), "expected one of argmax, softmax, thompson");
                None
            }
        }
    }

    fn cavi(&mut self, path: &str, v: &Value) -> Option<CaviOptions> {
        let m = self.object(path, v, &["max_sweeps", "tol", "restarts", "seed"])?;
        let d = CaviOptions::default();
        let max_sweeps = self.optional(path, m, "max_sweeps", d.max_sweeps, |c, p, v| c.positive_usize(p, v));
        let tol = self.optional(path, m, "tol", d.tol, |c, p, v| c.positive(p, v));
        let restarts = self.optional(path, m, "restarts", d.restarts, |c, p, v| c.usize(p, v));
        let seed = self.optional(path, m, "seed", d.seed, |c, p, v| c.usize(p, v).map(|s| s as u64));
        Some(CaviOptions {
            max_sweeps: max_sweeps?,
            tol: tol?,
            restarts: restarts?,
            seed: seed?,
            ..d
        })
    }

    fn active(&mut self, path: &str, v: &Value) -> Option<ActiveSettings> {
        let m = self.object(path, v, &["gamma", "precision", "damping", "tol", "max_iter"])?;
        let d = ActiveSettings::default();
        let gamma = self.optional(path, m, "gamma", d.gamma, |c, p, v| c.positive(p, v));
        let damping = self.optional(path, m, "damping", d.damping, |c, p, v| {
            c.real(p, v).filter(|x| {
                let ok = (0.0..1.0).contains(x);
                if !ok {
                    c.fail(p, "damping must lie in [0, 1)");
                }
                ok
            })
        });
        let tol = self.optional(path, m, "tol", d.tol, |c, p, v| c.positive(p, v));
        let max_iter = self.optional(path, m, "max_iter", d.max_iter, |c, p, v| c.positive_usize(p, v));
        let precision = self.optional(path, m, "precision", None, |c, p, v| {
            let m = c.object(p, v, &["shape", "rate"])?;
            let shape = c.required(p, m, "shape").and_then(|v| c.positive(&join(p, "shape"), v));
            let rate = c.required(p, m, "rate").and_then(|v| c.positive(&join(p, "rate"), v));
            GammaParams::new(shape?, rate?).ok().map(Some)
        });
        Some(ActiveSettings {
            gamma: gamma?,
            precision: precision?,
            damping: damping?,
            tol: tol?,
            max_iter: max_iter?,
        })
    }

    fn motivation(&mut self, path: &str, v: &Value, n_sensor: usize) -> Option<Motivation> {
        let Some(m) = v.as_object() else {
            self.fail(path, "expected an object with a kind");
            return None;
        };
        let kind = self.required(path, m, "kind")?;
        let kinds = Motivation::KINDS.join(", ");
        let Some(kind) = kind.as_str().filter(|k| Motivation::KINDS.contains(k)) else {
            self.fail(&join(path, "kind"), format!("unknown motivation kind {kind}; accepted kinds: {kinds}"));
            return None;
        };
        let desired = |c: &mut Self, required: bool| -> Option<Option<DesiredPrior>> {
            match m.get("desired") {
                None if required => {
                    c.fail(&join(path, "desired"), "missing field");
                    None
                }
                None => Some(None),
                Some(d) => c.desired(&join(path, "desired"), d, n_sensor).map(Some),
            }
        };
        let time_summed = |c: &mut Self| c.optional(path, m, "time_summed", false, |c, p, v| c.boolean(p, v));
        match kind {
            "fep" => {
                self.object(path, v, &["kind", "desired", "info_gain", "time_summed"])?;
                let info_gain = self.optional(path, m, "info_gain", None, |c, p, v| c.info_gain(p, v).map(Some));
                let (desired, time_summed) = (desired(self, false), time_summed(self));
                Some(Motivation::Fep(FepSettings {
                    desired: desired?,
                    info_gain: info_gain?,
                    time_summed: time_summed?,
                }))
            }
            "fep_friston2015" => {
                self.object(path, v, &["kind", "desired"])?;
                let desired = desired(self, true)??;
                Some(Motivation::FepFriston2015 { desired })
            }
            "extrinsic_only" => {
                self.object(path, v, &["kind", "desired", "time_summed"])?;
                let (desired, time_summed) = (desired(self, true), time_summed(self));
                Some(Motivation::ExtrinsicOnly {
                    desired: desired??,
                    time_summed: time_summed?,
                })
            }
            "empowerment" => {
                self.object(path, v, &["kind", "n", "m"])?;
                let n = self.optional(path, m, "n", 0, |c, p, v| c.usize(p, v));
                let k = self.required(path, m, "m").and_then(|v| self.positive_usize(&join(path, "m"), v));
                Some(Motivation::Empowerment { n: n?, m: k? })
            }
            "predictive_info" => {
                self.object(path, v, &["kind"])?;
                Some(Motivation::PredictiveInfo)
            }
            "ksa" => {
                self.object(path, v, &["kind", "atoms"])?;
                let atoms = self.optional(path, m, "atoms", ThetaAtoms::Components, |c, p, v| c.atoms(p, v));
                Some(Motivation::Ksa { atoms: atoms? })
            }
            "constant" => {
                self.object(path, v, &["kind", "value"])?;
                let x = self.required(path, m, "value").and_then(|v| self.real(&join(path, "value"), v));
                Some(Motivation::Constant(x?))
            }
            _ => {
                self.object(path, v, &["kind", "terms"])?;
                let tp = join(path, "terms");
                let Some(items) = self.required(path, m, "terms")?.as_array().filter(|a| !a.is_empty()) else {
                    self.fail(&tp, "expected a non-empty array of {weight, motivation}");
                    return None;
                };
                let mut terms = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    let p = index(&tp, i);
                    let Some(im) = self.object(&p, item, &["weight", "motivation"]) else {
                        continue;
                    };
                    let w = self.required(&p, im, "weight").and_then(|w| self.real(&join(&p, "weight"), w));
                    let mm = self
                        .required(&p, im, "motivation")
                        .and_then(|mv| self.motivation(&join(&p, "motivation"), mv, n_sensor));
                    if let (Some(w), Some(mm)) = (w, mm) {
                        terms.push((w, mm));
                    }
                }
                (terms.len() == items.len()).then_some(Motivation::WeightedSum(terms))
            }
        }
    }

    /// `{"delta": k, "smoothing": eps}`, `{"probs": [...]}` or
    /// `{"schedule": [[...], ...]}`.
    fn desired(&mut self, path: &str, v: &Value, n_sensor: usize) -> Option<DesiredPrior> {
        let m = self.object(path, v, &["delta", "smoothing", "probs", "schedule"])?;
        let check_len = |c: &mut Self, p: &str, cat: Categorical| {
            if cat.len() == n_sensor {
                Some(cat)
            } else {
                c.fail(p, format!("expected {n_sensor} sensor values, found {}", cat.len()));
                None
            }
        };
        if let Some(k) = m.get("delta") {
            let k = self.usize(&join(path, "delta"), k)?;
            let eps = self.optional(path, m, "smoothing", 0.0, |c, p, v| c.real(p, v))?;
            return match DesiredPrior::smoothed_delta(n_sensor, k, eps) {
                Ok(d) => Some(d),
                Err(e) => {
                    self.fail(path, e.to_string());
                    None
                }
            };
        }
        if m.contains_key("smoothing") {
            self.fail(&join(path, "smoothing"), "only used with delta");
        }
        if let Some(p) = m.get("probs") {
            let pp = join(path, "probs");
            let cat = self.categorical(&pp, p)?;
            return check_len(self, &pp, cat).map(DesiredPrior::Homogeneous);
        }
        if let Some(s) = m.get("schedule") {
            let sp = join(path, "schedule");
            let Some(items) = s.as_array().filter(|a| !a.is_empty()) else {
                self.fail(&sp, "expected a non-empty array of distributions");
                return None;
            };
            let mut out = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let p = index(&sp, i);
                if let Some(c) = self.categorical(&p, item).and_then(|c| check_len(self, &p, c)) {
                    out.push(c);
                }
            }
            return (out.len() == items.len()).then_some(DesiredPrior::Schedule(out));
        }
        self.fail(path, "give one of delta, probs, schedule");
        None
    }

    fn info_gain(&mut self, path: &str, v: &Value) -> Option<InfoGainSettings> {
        let m = self.object(path, v, &["blocks", "atoms"])?;
        let subset = match m.get("blocks") {
            None => Some(BlockSet::ALL),
            Some(b) => {
                let bp = join(path, "blocks");
                let mut set = BlockSet::NONE;
                match b.as_array() {
                    Some(items) => {
                        for (i, item) in items.iter().enumerate() {
                            match item.as_str() {
                                Some("sensor") => set.sensor = true,
                                Some("transition") => set.transition = true,
                                Some("initial") => set.initial = true,
                                _ => self.fail(&index(&bp, i), "expected sensor, transition or initial"),
                            }
                        }
                        Some(set)
                    }
                    None => {
                        self.fail(&bp, "expected an array of block names");
                        None
                    }
                }
            }
        };
        let atoms = self.optional(path, m, "atoms", ThetaAtoms::Components, |c, p, v| c.atoms(p, v));
        Some(InfoGainSettings {
            subset: subset?,
            atoms: atoms?,
        })
    }

    fn atoms(&mut self, path: &str, v: &Value) -> Option<ThetaAtoms> {
        match serde_json::from_value::<ThetaAtoms>(v.clone()) {
            Ok(ThetaAtoms::Sampled { count: 0, .. }) => {
                self.fail(path, "sampled atoms need count >= 1");
                None
            }
            Ok(a) => Some(a),
            Err(e) => {
                self.fail(path, e.to_string());
                None
            }
        }
    }

    fn run(&mut self, v: &Value) -> Option<RunSettings> {
        let path = "run";
        let m = self.object(path, v, &["steps", "episodes", "seed"])?;
        let steps = self
            .required(path, m, "steps")
            .and_then(|v| self.positive_usize(&join(path, "steps"), v));
        let episodes = self.optional(path, m, "episodes", 1, |c, p, v| c.usize(p, v));
        let seed = self.optional(path, m, "seed", 0, |c, p, v| {
            let s = v.as_u64();
            if s.is_none() {
                c.fail(p, "expected an unsigned 64-bit integer");
            }
            s
        });
        Some(RunSettings {
            steps: steps?,
            episodes: episodes?,
            seed: seed?,
        })
    }

    fn caps(&mut self, v: &Value) -> Option<Caps> {
        let path = "caps";
        let m = self.object(path, v, &["entries", "sequences"])?;
        let d = Caps::default();
        let entries = self.optional(path, m, "entries", d.entries, |c, p, v| c.positive_usize(p, v));
        let sequences = self.optional(path, m, "sequences", d.sequences, |c, p, v| c.positive_usize(p, v));
        Some(Caps {
            entries: entries?,
            sequences: sequences?,
        })
    }

    fn tolerances(&mut self, v: &Value) -> Option<bool> {
        let path = "tolerances";
        let m = self.object(path, v, &["allow_nonconvergence"])?;
        self.optional(path, m, "allow_nonconvergence", false, |c, p, v| c.boolean(p, v))
    }
}

struct Caps {
    entries: usize,
    sequences: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            entries: crate::view::DEFAULT_CAP,
            sequences: crate::select::SEQUENCE_CAP,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CHAIN: &str = r#"{
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
    fn minimal_chain_config() {
        let cfg = parse_config(CHAIN).unwrap();
        assert_eq!(cfg.environment_name.as_deref(), Some("chain-4"));
        assert_eq!(cfg.run, RunSettings { steps: 5, episodes: 2, seed: 7 });
        assert_eq!(cfg.agent.horizon, HorizonRule::Sliding(2));
        assert_eq!(cfg.digest.len(), 64);
    }

    #[test]
    fn bad_transition_row_is_named() {
        let text = r#"{
            "environment": {
                "initial": [1.0, 0.0],
                "transition": [[1.0, 0.0], [0.0, 1.0], [0.9, 0.0], [1.0, 0.0]],
                "sensor": [[1.0, 0.0], [0.0, 1.0]],
                "n_action": 2
            },
            "model": {"horizon": {"fixed": 3}},
            "agent": {"inference": "exact", "motivation": {"kind": "predictive_info"}, "selection": {"mode": "argmax"}},
            "run": {"steps": 2}
        }"#;
        let err = parse_config(text).unwrap_err();
        let v = err.violations();
        assert_eq!(v.len(), 1, "{err}");
        assert_eq!(v[0].path, "environment.transition[2]");
        assert!(v[0].message.contains("0.9"));
    }

    #[test]
    fn unknown_motivation_lists_kinds() {
        let text = CHAIN.replace(r#""kind": "fep""#, r#""kind": "curiosity""#);
        let err = parse_config(&text).unwrap_err();
        let v = err.violations();
        assert_eq!(v[0].path, "agent.motivation.kind");
        for k in Motivation::KINDS {
            assert!(v[0].message.contains(k));
        }
    }

    #[test]
    fn all_violations_reported() {
        let text = CHAIN
            .replace(r#""steps": 5"#, r#""steps": 0"#)
            .replace(r#""mode": "argmax""#, r#""mode": "greedy""#)
            .replace(r#""sliding": 2"#, r#""sliding": -1"#);
        let err = parse_config(&text).unwrap_err();
        let paths: Vec<_> = err.violations().iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"run.steps"), "{paths:?}");
        assert!(paths.contains(&"model.horizon.sliding"), "{paths:?}");
    }

    #[test]
    fn parse_error_position() {
        match parse_config("{\n  \"run\": ,\n}") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
