//! Mean-field variational inference for the posterior factor.
//!
//! The family is `r(e_0) ... r(e_{t-1}) r(theta_sensor) r(theta_transition)
//! r(theta_initial)` with categorical state factors and Dirichlet parameter
//! factors. Known parameter blocks stay known. Only the posterior factor is
//! approximated; future predictives integrate the Dirichlet factors exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Block, ModelSpaces, ParamBelief};
use crate::pa_loop::History;
use crate::par::Exec;
use crate::prob::{kl_dirichlet, sample_dirichlet, xlogx, Categorical, DirichletBlock};
use crate::view::{path_digits, PosteriorView};

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    /// One state factor per observed step `0..t`.
    pub env: Vec<Categorical>,
    /// Parameter factors. Dirichlet blocks carry their concentrations as base
    /// with zero counts.
    pub blocks: ParamBelief,
}

impl VariationalParams {
    /// Uniform state factors and parameter factors equal to the prior.
    pub fn uniform(spaces: &ModelSpaces, t: usize, prior: &ParamBelief) -> Self {
        Self {
            env: vec![Categorical::uniform(spaces.n_env); t],
            blocks: prior.collapsed(),
        }
    }

    pub fn t(&self) -> usize {
        self.env.len()
    }

    /// The approximate complete posterior as a view over future segments.
    pub fn view(&self, spaces: ModelSpaces) -> Result<PosteriorView> {
        let start = self
            .env
            .last()
            .cloned()
            .ok_or_else(|| Error::ShapeMismatch("variational parameters cover no steps".into()))?;
        PosteriorView::single(spaces, start, self.blocks.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaviOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    /// Extra fits from seeded random state factors; the lowest free energy wins.
    pub restarts: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for CaviOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-8,
            restarts: 0,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub vfe: f64,
    pub sweeps: usize,
    pub last_delta: f64,
    pub converged: bool,
    /// Free energy at initialization followed by the value after each sweep.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalFit {
    pub params: VariationalParams,
    pub report: FitReport,
}

fn check_shapes(spaces: &ModelSpaces, phi: &VariationalParams, h: &History, prior: &ParamBelief) -> Result<()> {
    h.check_spaces(spaces.n_sensor, spaces.n_action)?;
    prior.check(spaces)?;
    phi.blocks.check(spaces)?;
    if phi.env.len() != h.t() {
        return Err(Error::ShapeMismatch(format!(
            "{} state factors for a history of length {}",
            phi.env.len(),
            h.t()
        )));
    }
    if let Some(c) = phi.env.iter().find(|c| c.len() != spaces.n_env) {
        return Err(Error::ShapeMismatch(format!(
            "state factor over {} states, model has {}",
            c.len(),
            spaces.n_env
        )));
    }
    for (p, x) in [
        (&phi.blocks.sensor, &prior.sensor),
        (&phi.blocks.transition, &prior.transition),
        (&phi.blocks.initial, &prior.initial),
    ] {
        if p.is_known() != x.is_known() {
            return Err(Error::ShapeMismatch(
                "variational and prior blocks disagree on which parameters are known".into(),
            ));
        }
    }
    Ok(())
}

/// Expected log parameters of every row of a block.
fn elog_table(b: &Block) -> Vec<Vec<f64>> {
    (0..b.n_rows()).map(|r| b.expected_log_row(r)).collect()
}

/// `w * l` with the convention `0 * -inf = 0`.
#[inline]
fn wl(w: f64, l: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * l
    }
}

struct ExpectedCounts {
    sensor: Vec<f64>,
    transition: Vec<f64>,
    initial: Vec<f64>,
}

fn expected_counts(spaces: &ModelSpaces, env: &[Categorical], h: &History) -> ExpectedCounts {
    let (ne, ns) = (spaces.n_env, spaces.n_sensor);
    let mut sensor = vec![0.0; ne * ns];
    let mut transition = vec![0.0; spaces.n_action * ne * ne];
    let initial = env[0].probs().to_vec();
    for (tau, phi) in env.iter().enumerate() {
        let s = h.sensors()[tau];
        for e in 0..ne {
            sensor[e * ns + s] += phi.prob(e);
        }
        if tau > 0 {
            let a = h.actions()[tau - 1];
            for e in 0..ne {
                let pe = env[tau - 1].prob(e);
                if pe == 0.0 {
                    continue;
                }
                let row = spaces.transition_row(a, e);
                for e2 in 0..ne {
                    transition[row * ne + e2] += pe * phi.prob(e2);
                }
            }
        }
    }
    ExpectedCounts {
        sensor,
        transition,
        initial,
    }
}

fn block_terms(phi: &Block, prior: &Block, counts: &[f64]) -> f64 {
    let k = phi.k();
    let mut acc = 0.0;
    for r in 0..phi.n_rows() {
        let elog = phi.expected_log_row(r);
        for (j, &l) in elog.iter().enumerate() {
            acc -= wl(counts[r * k + j], l);
        }
        if let (Block::Dirichlet(p), Block::Dirichlet(x)) = (phi, prior) {
            acc += kl_dirichlet(&p.row_alpha(r), &x.row_alpha(r));
        }
    }
    acc
}

/// Variational free energy `E_r[log r - log q(s, e, theta | a, xi)]`.
pub fn vfe(spaces: &ModelSpaces, phi: &VariationalParams, h: &History, prior: &ParamBelief) -> Result<f64> {
    check_shapes(spaces, phi, h, prior)?;
    Ok(vfe_unchecked(spaces, phi, h, prior))
}

fn vfe_unchecked(spaces: &ModelSpaces, phi: &VariationalParams, h: &History, prior: &ParamBelief) -> f64 {
    let neg_entropy: f64 = phi.env.iter().flat_map(|c| c.probs()).map(|&p| xlogx(p)).sum();
    let n = expected_counts(spaces, &phi.env, h);
    neg_entropy
        + block_terms(&phi.blocks.sensor, &prior.sensor, &n.sensor)
        + block_terms(&phi.blocks.transition, &prior.transition, &n.transition)
        + block_terms(&phi.blocks.initial, &prior.initial, &n.initial)
}

fn update_block(phi: &mut Block, prior: &Block, counts: &[f64]) {
    if let Block::Dirichlet(x) = prior {
        let k = x.k();
        let alpha: Vec<f64> = (0..x.n_rows())
            .flat_map(|r| x.row_alpha(r))
            .zip(counts)
            .map(|(a, c)| a + c)
            .collect();
        debug_assert_eq!(alpha.len(), x.n_rows() * k);
        *phi = Block::Dirichlet(DirichletBlock::from_flat(k, alpha));
    }
}

/// One coordinate-ascent sweep: state factors in time order, then the
/// initial, sensor and transition factors.
pub(crate) fn cavi_sweep(
    spaces: &ModelSpaces,
    phi: &mut VariationalParams,
    h: &History,
    prior: &ParamBelief,
) -> Result<()> {
    let (ne, t) = (spaces.n_env, h.t());
    let el_sensor = elog_table(&phi.blocks.sensor);
    let el_trans = elog_table(&phi.blocks.transition);
    let el_init = phi.blocks.initial.expected_log_row(0);
    for tau in 0..t {
        let s = h.sensors()[tau];
        let mut logits = vec![0.0; ne];
        for (e, l) in logits.iter_mut().enumerate() {
            let mut acc = el_sensor[e][s];
            if tau == 0 {
                acc += el_init[e];
            } else {
                let a = h.actions()[tau - 1];
                for prev in 0..ne {
                    acc += wl(phi.env[tau - 1].prob(prev), el_trans[spaces.transition_row(a, prev)][e]);
                }
            }
            if tau + 1 < t {
                let a = h.actions()[tau];
                let row = &el_trans[spaces.transition_row(a, e)];
                for (next, &el) in row.iter().enumerate() {
                    acc += wl(phi.env[tau + 1].prob(next), el);
                }
            }
            *l = acc;
        }
        phi.env[tau] = Categorical::from_log_weights(&logits).map_err(|_| Error::ZeroEvidence)?;
    }
    let n = expected_counts(spaces, &phi.env, h);
    update_block(&mut phi.blocks.initial, &prior.initial, &n.initial);
    update_block(&mut phi.blocks.sensor, &prior.sensor, &n.sensor);
    update_block(&mut phi.blocks.transition, &prior.transition, &n.transition);
    Ok(())
}

/// Runs sweeps from `phi` until the free-energy decrease drops below `tol`.
pub(crate) fn run_sweeps(
    spaces: &ModelSpaces,
    mut phi: VariationalParams,
    h: &History,
    prior: &ParamBelief,
    opts: &CaviOptions,
) -> Result<VariationalFit> {
    let mut current = vfe_unchecked(spaces, &phi, h, prior);
    let mut trace = vec![current];
    let mut last_delta = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        cavi_sweep(spaces, &mut phi, h, prior)?;
        sweeps += 1;
        let next = vfe_unchecked(spaces, &phi, h, prior);
        last_delta = current - next;
        current = next;
        trace.push(next);
        if last_delta.abs() < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(VariationalFit {
        params: phi,
        report: FitReport {
            vfe: current,
            sweeps,
            last_delta,
            converged,
            trace,
        },
    })
}

fn random_init(spaces: &ModelSpaces, t: usize, prior: &ParamBelief, seed: u64, restart: u64) -> VariationalParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    let ones = vec![1.0; spaces.n_env];
    VariationalParams {
        env: (0..t).map(|_| sample_dirichlet(&ones, &mut rng)).collect(),
        blocks: prior.collapsed(),
    }
}

/// Coordinate-ascent fit. Non-convergence is returned as an error carrying
/// the fit so the caller can still use it.
pub fn cavi_fit(spaces: &ModelSpaces, h: &History, prior: &ParamBelief, opts: &CaviOptions) -> Result<VariationalFit> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let init = VariationalParams::uniform(spaces, h.t(), prior);
    check_shapes(spaces, &init, h, prior)?;
    let fits = opts.exec.try_map_range(opts.restarts + 1, |i| {
        let start = if i == 0 {
            init.clone()
        } else {
            random_init(spaces, h.t(), prior, opts.seed, i as u64)
        };
        run_sweeps(spaces, start, h, prior, opts)
    })?;
    let best = fits
        .into_iter()
        .reduce(|best, f| if f.report.vfe < best.report.vfe { f } else { best })
        .expect("at least one fit");
    if best.report.converged {
        Ok(best)
    } else {
        Err(Error::CaviNonConvergence(Box::new(best)))
    }
}

/// Approximate posterior predictive over sensor paths.
pub fn approx_predictive_sensor_dist(spaces: ModelSpaces, phi: &VariationalParams, actions: &[usize]) -> Result<Categorical> {
    phi.view(spaces)?.predictive_sensor_dist(actions)
}

/// Marginals of the approximate complete posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    /// State factor at an observed step.
    PastEnv(usize),
    SensorMean { env: usize },
    TransitionMean { action: usize, env: usize },
    InitialMean,
    FutureSensor(usize),
    FutureEnv(usize),
    /// Joint of state and sensor value at a future offset, laid out `e * n_sensor + s`.
    FutureEnvSensor(usize),
    SensorPath,
    EnvPath,
}

impl Query {
    /// Parses names such as `past_env:2`, `transition_mean:1:0` or `sensor_path`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::UnknownQuery(text.to_string()))
        };
        let q = match (parts[0], parts.len()) {
            ("past_env", 2) => Query::PastEnv(num(1)?),
            ("sensor_mean", 2) => Query::SensorMean { env: num(1)? },
            ("transition_mean", 3) => Query::TransitionMean {
                action: num(1)?,
                env: num(2)?,
            },
            ("initial_mean", 1) => Query::InitialMean,
            ("future_sensor", 2) => Query::FutureSensor(num(1)?),
            ("future_env", 2) => Query::FutureEnv(num(1)?),
            ("future_env_sensor", 2) => Query::FutureEnvSensor(num(1)?),
            ("sensor_path", 1) => Query::SensorPath,
            ("env_path", 1) => Query::EnvPath,
            _ => return Err(Error::UnknownQuery(text.to_string())),
        };
        Ok(q)
    }
}

pub fn approx_complete_posterior_query(
    spaces: ModelSpaces,
    phi: &VariationalParams,
    actions: &[usize],
    query: Query,
) -> Result<Categorical> {
    let oob = |what, index, size| Error::IndexOutOfRange { what, index, size };
    let future = |r: usize| -> Result<()> {
        if r < actions.len() {
            Ok(())
        } else {
            Err(oob("future offset", r, actions.len()))
        }
    };
    match query {
        Query::PastEnv(tau) => phi.env.get(tau).cloned().ok_or_else(|| oob("step", tau, phi.t())),
        Query::SensorMean { env } => {
            if env >= spaces.n_env {
                return Err(oob("environment state", env, spaces.n_env));
            }
            Ok(phi.blocks.sensor.mean_row(env))
        }
        Query::TransitionMean { action, env } => {
            if env >= spaces.n_env || action >= spaces.n_action {
                return Err(oob("transition row", spaces.transition_row(action, env), spaces.n_env * spaces.n_action));
            }
            Ok(phi.blocks.transition.mean_row(spaces.transition_row(action, env)))
        }
        Query::InitialMean => Ok(phi.blocks.initial.mean_row(0)),
        Query::FutureSensor(r) => {
            future(r)?;
            Categorical::from_weights(phi.view(spaces)?.joint(actions)?.step_sensor(r))
        }
        Query::FutureEnv(r) => {
            future(r)?;
            let js = phi.view(spaces)?.joint(actions)?.step_env_sensor(r);
            Categorical::from_weights(js.chunks(spaces.n_sensor).map(|row| row.iter().sum()).collect())
        }
        Query::FutureEnvSensor(r) => {
            future(r)?;
            Categorical::from_weights(phi.view(spaces)?.joint(actions)?.step_env_sensor(r))
        }
        Query::SensorPath => phi.view(spaces)?.predictive_sensor_dist(actions),
        Query::EnvPath => phi.view(spaces)?.predictive_env_dist(actions),
    }
}

/// Decodes a sensor-path index returned by the path queries.
pub fn sensor_path(index: usize, spaces: &ModelSpaces, len: usize) -> Vec<usize> {
    path_digits(index, spaces.n_sensor, len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{compute_posterior_factor, log_evidence};
    use crate::model::ModelPrior;
    use crate::view::DEFAULT_CAP;

    #[test]
    fn single_state_fit_is_exact() {
        let sp = ModelSpaces::new(1, 2, 2).unwrap();
        let prior = ParamBelief::symmetric(&sp, 1.0).unwrap();
        let h = History::parse("0 1 0 0 1").unwrap();
        let fit = cavi_fit(&sp, &h, &prior, &CaviOptions::default()).unwrap();
        assert!(fit.report.sweeps <= 2);
        let exact = compute_posterior_factor(&ModelPrior::single(sp, prior.clone()).unwrap(), &h, DEFAULT_CAP).unwrap();
        let Block::Dirichlet(d) = &exact.entries[0].belief.sensor else { panic!() };
        assert_eq!(fit.params.blocks.sensor.mean_row(0), d.row_params(0).mean());
        let le = exact.log_evidence;
        assert!((fit.report.vfe + le).abs() < 1e-9);
    }

    #[test]
    fn trace_is_monotone_and_bounded() {
        let sp = ModelSpaces::new(2, 2, 2).unwrap();
        let prior = ParamBelief::symmetric(&sp, 0.7).unwrap();
        let h = History::parse("0 1 1 0 1 1 0 0 0").unwrap();
        let fit = cavi_fit(&sp, &h, &prior, &CaviOptions::default()).unwrap();
        for w in fit.report.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        let le = log_evidence(&ModelPrior::single(sp, prior).unwrap(), &h, DEFAULT_CAP).unwrap();
        assert!(fit.report.vfe + le >= -1e-9);
    }

    #[test]
    fn query_parsing() {
        assert_eq!(Query::parse("transition_mean:1:0").unwrap(), Query::TransitionMean { action: 1, env: 0 });
        assert_eq!(Query::parse("sensor_path").unwrap(), Query::SensorPath);
        assert!(matches!(Query::parse("theta_mode"), Err(Error::UnknownQuery(_))));
        assert!(matches!(Query::parse("past_env:x"), Err(Error::UnknownQuery(_))));
    }

    #[test]
    fn past_env_query_returns_factor() {
        let sp = ModelSpaces::new(2, 2, 2).unwrap();
        let prior = ParamBelief::symmetric(&sp, 1.0).unwrap();
        let h = History::parse("0 1 1").unwrap();
        let fit = cavi_fit(&sp, &h, &prior, &CaviOptions::default()).unwrap();
        let q = approx_complete_posterior_query(sp, &fit.params, &[0], Query::PastEnv(1)).unwrap();
        assert_eq!(q, fit.params.env[1]);
        let m = approx_complete_posterior_query(sp, &fit.params, &[0], Query::SensorMean { env: 1 }).unwrap();
        assert_eq!(m, fit.params.blocks.sensor.mean_row(1));
    }
}
