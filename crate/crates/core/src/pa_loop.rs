//! The ground-truth perception-action loop: environment, memory and the
//! episode driver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::prob::{sample_categorical, Categorical, ConditionalTable};

/// A finite environment. Transition rows are indexed by `action * n_env + env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub initial: Categorical,
    pub transition: ConditionalTable,
    pub sensor: ConditionalTable,
    pub n_action: usize,
}

impl EnvironmentSpec {
    pub fn new(
        initial: Categorical,
        transition: ConditionalTable,
        sensor: ConditionalTable,
        n_action: usize,
    ) -> Result<Self> {
        let n_env = initial.len();
        if n_action == 0 {
            return Err(Error::ShapeMismatch("action set is empty".into()));
        }
        if transition.n_rows() != n_action * n_env || transition.n_targets() != n_env {
            return Err(Error::ShapeMismatch(format!(
                "transition table is {}x{}, expected {}x{n_env}",
                transition.n_rows(),
                transition.n_targets(),
                n_action * n_env
            )));
        }
        if sensor.n_rows() != n_env {
            return Err(Error::ShapeMismatch(format!(
                "sensor table has {} rows, expected {n_env}",
                sensor.n_rows()
            )));
        }
        Ok(Self {
            initial,
            transition,
            sensor,
            n_action,
        })
    }

    pub fn n_env(&self) -> usize {
        self.initial.len()
    }

    pub fn n_sensor(&self) -> usize {
        self.sensor.n_targets()
    }

    pub fn transition_row(&self, action: usize, env: usize) -> &Categorical {
        self.transition.row(action * self.n_env() + env)
    }

    fn check(&self, env: usize, action: usize) -> Result<()> {
        if env >= self.n_env() {
            return Err(Error::IndexOutOfRange {
                what: "environment state",
                index: env,
                size: self.n_env(),
            });
        }
        if action >= self.n_action {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: action,
                size: self.n_action,
            });
        }
        Ok(())
    }
}

/// One environment step: the next state from the transition row, then a
/// sensor value emitted from that state.
pub fn env_step(
    env: &EnvironmentSpec,
    state: usize,
    action: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize)> {
    env.check(state, action)?;
    let next = sample_categorical(env.transition_row(action, state), rng);
    let s = sample_categorical(env.sensor.row(next), rng);
    Ok((next, s))
}

/// The agent's perfect memory: sensor values `s_0..s_{t-1}` and the actions
/// `a_1..a_{t-1}` between them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History {
    sensors: Vec<usize>,
    actions: Vec<usize>,
}

impl History {
    pub fn init(s0: usize) -> Self {
        Self {
            sensors: vec![s0],
            actions: Vec::new(),
        }
    }

    pub fn from_parts(sensors: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if sensors.is_empty() || sensors.len() != actions.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "history with {} sensor values and {} actions",
                sensors.len(),
                actions.len()
            )));
        }
        Ok(Self { sensors, actions })
    }

    /// Current time step, equal to the number of recorded sensor values.
    pub fn t(&self) -> usize {
        self.sensors.len()
    }

    pub fn sensors(&self) -> &[usize] {
        &self.sensors
    }

    /// `actions()[i]` is the action taken before `sensors()[i + 1]`.
    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn last_sensor(&self) -> usize {
        *self.sensors.last().expect("history is never empty")
    }

    /// Returns a new history extended by action `a` and the sensor value `s`
    /// it produced.
    pub fn append(&self, s: usize, a: usize) -> Self {
        let mut h = self.clone();
        h.push(s, a);
        h
    }

    pub fn push(&mut self, s: usize, a: usize) {
        self.sensors.push(s);
        self.actions.push(a);
    }

    /// The history truncated to its first `t` sensor values.
    pub fn prefix(&self, t: usize) -> Self {
        assert!(t >= 1 && t <= self.t());
        Self {
            sensors: self.sensors[..t].to_vec(),
            actions: self.actions[..t - 1].to_vec(),
        }
    }

    /// Parses the alternating literal `"s0 a1 s1 a2 s2"`.
    pub fn parse(literal: &str) -> Result<Self> {
        let tokens: Vec<usize> = literal
            .split_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|_| Error::InvalidArgument(format!("`{tok}` is not an index")))
            })
            .collect::<Result<_>>()?;
        if tokens.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "history literal needs an odd number of entries (s0 a1 s1 ...), got {}",
                tokens.len()
            )));
        }
        let sensors = tokens.iter().step_by(2).copied().collect();
        let actions = tokens.iter().skip(1).step_by(2).copied().collect();
        Self::from_parts(sensors, actions)
    }

    pub fn check_spaces(&self, n_sensor: usize, n_action: usize) -> Result<()> {
        if let Some(&s) = self.sensors.iter().find(|&&s| s >= n_sensor) {
            return Err(Error::IndexOutOfRange {
                what: "sensor value",
                index: s,
                size: n_sensor,
            });
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= n_action) {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                size: n_action,
            });
        }
        Ok(())
    }
}

/// Diagnostics an agent may attach to a decision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub value_top: Option<f64>,
    pub vfe: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub policy: Categorical,
    pub diagnostics: StepDiagnostics,
}

impl Decision {
    pub fn plain(policy: Categorical) -> Self {
        Self {
            policy,
            diagnostics: StepDiagnostics::default(),
        }
    }
}

/// Action generation `p(a_t | m_t)`. The rng is the episode's stream, so
/// agents that sample internally stay reproducible.
pub trait Agent {
    fn act(&mut self, history: &History, rng: &mut ChaCha8Rng) -> Result<Decision>;
}

impl<F> Agent for F
where
    F: FnMut(&History) -> Result<Categorical>,
{
    fn act(&mut self, history: &History, _rng: &mut ChaCha8Rng) -> Result<Decision> {
        self(history).map(Decision::plain)
    }
}

/// Picks every action with equal probability.
#[derive(Debug, Clone, Copy)]
pub struct UniformAgent {
    pub n_action: usize,
}

impl Agent for UniformAgent {
    fn act(&mut self, _: &History, _: &mut ChaCha8Rng) -> Result<Decision> {
        Ok(Decision::plain(Categorical::uniform(self.n_action)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: usize,
    pub e: usize,
    pub s: usize,
    pub a: usize,
    pub policy: Categorical,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub e0: usize,
    pub s0: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// The agent's memory after the last step.
    pub fn history(&self) -> History {
        let mut h = History::init(self.s0);
        for st in &self.steps {
            h.push(st.s, st.a);
        }
        h
    }
}

/// The rng for episode `index` under a master seed: one ChaCha stream per
/// episode, so episodes are independent of scheduling.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs one episode of `steps` actions: `e_0, s_0`, then for each `t` the
/// agent acts, `e_t` follows from the transition and `s_t` is emitted.
pub fn run_episode(
    env: &EnvironmentSpec,
    agent: &mut dyn Agent,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("episode needs at least one step".into()));
    }
    let e0 = sample_categorical(&env.initial, rng);
    let s0 = sample_categorical(env.sensor.row(e0), rng);
    let mut history = History::init(s0);
    let mut e = e0;
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let decision = agent
            .act(&history, rng)
            .map_err(|source| Error::Agent {
                step: t,
                source: Box::new(source),
            })?;
        if decision.policy.len() != env.n_action {
            return Err(Error::Agent {
                step: t,
                source: Box::new(Error::ShapeMismatch(format!(
                    "policy over {} actions, environment has {}",
                    decision.policy.len(),
                    env.n_action
                ))),
            });
        }
        let a = sample_categorical(&decision.policy, rng);
        let (next, s) = env_step(env, e, a, rng)?;
        e = next;
        out.push(Step {
            t,
            e,
            s,
            a,
            policy: decision.policy,
            diagnostics: decision.diagnostics,
        });
        history.push(s, a);
    }
    Ok(Trajectory { e0, s0, steps: out })
}

/// Runs `episodes` independent episodes, each with its own agent from
/// `make_agent` and its own rng stream.
pub fn run_episodes<A, F>(
    env: &EnvironmentSpec,
    make_agent: F,
    steps: usize,
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Vec<Result<Trajectory>>
where
    A: Agent,
    F: Fn() -> A + Sync + Send,
{
    exec.map_range(episodes, |k| {
        let mut agent = make_agent();
        let mut rng = episode_rng(seed, k as u64);
        run_episode(env, &mut agent, steps, &mut rng)
    })
}
