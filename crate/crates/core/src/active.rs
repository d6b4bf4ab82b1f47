//! Active inference: a softmax prior over action sequences driven by the
//! variational action value, optimized jointly with the posterior factor.
//!
//! The coupled objective is `vfe(phi) + KL(pi || q(a | phi, gamma))`, plus a
//! Gamma KL term when the precision `gamma` is itself inferred. Because `phi`
//! enters both sides of the KL, the optimizer is block-coordinate: one CAVI
//! sweep on the free energy with the action prior held at its pre-sweep value,
//! then the closed-form minimizer for `pi`, then a damped precision update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpaces, ParamBelief};
use crate::motivation::{make_action_value, Motivation};
use crate::pa_loop::History;
use crate::prob::{digamma, kl_divergence, ln_gamma, Categorical};
use crate::select::{first_action_marginal, ValueTable, SEQUENCE_CAP};
use crate::variational::{cavi_sweep, vfe, CaviOptions, VariationalParams};
use crate::view::DEFAULT_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Gamma parameters must be positive, got shape {shape}, rate {rate}"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// `KL(self || prior)` between Gamma distributions (shape, rate form).
    pub fn kl(&self, prior: &GammaParams) -> f64 {
        let (a1, b1, a0, b0) = (self.shape, self.rate, prior.shape, prior.rate);
        (a1 - a0) * digamma(a1) - ln_gamma(a1) + ln_gamma(a0) + a0 * (b1.ln() - b0.ln()) + a1 * (b0 - b1) / b1
    }
}

/// What the action distribution is pulled towards.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionTarget {
    /// The softmax of the variational action value at the current `phi`.
    Coupled,
    /// A fixed distribution over sequences, for example the Bayesian softmax.
    /// The problem then splits into a plain variational fit and a closed-form
    /// action update.
    Frozen(Categorical),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveOptions {
    /// Softmax precision when the precision is not inferred.
    pub gamma: f64,
    /// Gamma prior on the precision; `None` keeps `gamma` fixed.
    pub precision: Option<GammaParams>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub cavi: CaviOptions,
    pub horizon_len: usize,
    pub cap: usize,
    pub sequence_cap: usize,
    pub target: ActionTarget,
}

impl ActiveOptions {
    pub fn new(horizon_len: usize) -> Self {
        Self {
            gamma: 1.0,
            precision: None,
            damping: 0.5,
            tol: 1e-7,
            max_iter: 200,
            cavi: CaviOptions::default(),
            horizon_len,
            cap: DEFAULT_CAP,
            sequence_cap: SEQUENCE_CAP,
            target: ActionTarget::Coupled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveFitReport {
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveFit {
    pub params: VariationalParams,
    pub precision: Option<GammaParams>,
    /// Distribution over action sequences, lexicographic order.
    pub policy: Categorical,
    /// Action values at the final `phi` (absent for a frozen target).
    pub values: Option<ValueTable>,
    pub n_action: usize,
    pub len: usize,
    pub vfe: f64,
    pub report: ActiveFitReport,
}

impl ActiveFit {
    /// The expected precision used by the final action prior.
    pub fn expected_gamma(&self, opts: &ActiveOptions) -> f64 {
        self.precision.map_or(opts.gamma, |g| g.mean())
    }
}

/// `q(a_seq | phi) ~ exp(gamma * Q(a_seq, phi))` with the value table it came from.
pub fn action_prior(
    spaces: ModelSpaces,
    phi: &VariationalParams,
    gamma: f64,
    motivation: &Motivation,
    horizon_len: usize,
    cap: usize,
    sequence_cap: usize,
) -> Result<(Categorical, ValueTable)> {
    let view = phi.view(spaces)?.with_cap(cap);
    let table = make_action_value(&view, motivation).table(horizon_len, sequence_cap)?;
    Ok((table.softmax_sequences(gamma)?, table))
}

/// The coupled objective for given `pi`, `phi` and precision posterior.
#[allow(clippy::too_many_arguments)]
pub fn active_objective(
    spaces: ModelSpaces,
    pi: &Categorical,
    phi: &VariationalParams,
    precision: Option<&GammaParams>,
    h: &History,
    prior: &ParamBelief,
    motivation: &Motivation,
    opts: &ActiveOptions,
) -> Result<f64> {
    let f = vfe(&spaces, phi, h, prior)?;
    let target = match &opts.target {
        ActionTarget::Frozen(t) => t.clone(),
        ActionTarget::Coupled => {
            let gamma = precision.map_or(opts.gamma, |g| g.mean());
            action_prior(spaces, phi, gamma, motivation, opts.horizon_len, opts.cap, opts.sequence_cap)?.0
        }
    };
    let mut obj = f + kl_divergence(pi, &target)?;
    if let (Some(post), Some(pr)) = (precision, opts.precision.as_ref()) {
        obj += post.kl(pr);
    }
    Ok(obj)
}

/// Expected value under a distribution over sequences.
fn expected_value(table: &ValueTable, dist: &[f64]) -> f64 {
    table.values.iter().zip(dist).map(|(v, p)| v * p).sum()
}

/// Block-coordinate minimization of the coupled objective.
pub fn optimize(
    spaces: ModelSpaces,
    h: &History,
    prior: &ParamBelief,
    motivation: &Motivation,
    opts: &ActiveOptions,
) -> Result<ActiveFit> {
    if !(opts.tol > 0.0) || !(opts.cavi.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::InvalidArgument(format!("damping {} not in [0, 1)", opts.damping)));
    }
    let len = motivation.action_len(opts.horizon_len)?;
    let mut phi = VariationalParams::uniform(&spaces, h.t(), prior);
    let mut precision = opts.precision;
    let mut current_vfe = vfe(&spaces, &phi, h, prior)?;

    let gamma_of = |p: &Option<GammaParams>| p.map_or(opts.gamma, |g| g.mean());
    let prior_target = |phi: &VariationalParams, gamma: f64| -> Result<(Categorical, Option<ValueTable>)> {
        match &opts.target {
            ActionTarget::Frozen(t) => {
                if t.len() != spaces.n_action.pow(len as u32) {
                    return Err(Error::ShapeMismatch(format!(
                        "frozen target over {} sequences, expected {}",
                        t.len(),
                        spaces.n_action.pow(len as u32)
                    )));
                }
                Ok((t.clone(), None))
            }
            ActionTarget::Coupled => {
                let (q, table) =
                    action_prior(spaces, phi, gamma, motivation, opts.horizon_len, opts.cap, opts.sequence_cap)?;
                Ok((q, Some(table)))
            }
        }
    };
    let objective = |vfe: f64, pi: &Categorical, target: &Categorical, precision: &Option<GammaParams>| -> Result<f64> {
        let mut obj = vfe + kl_divergence(pi, target)?;
        if let (Some(post), Some(pr)) = (precision, opts.precision.as_ref()) {
            obj += post.kl(pr);
        }
        Ok(obj)
    };

    let (mut target, mut values) = prior_target(&phi, gamma_of(&precision))?;
    let mut pi = target.clone();
    let mut obj = objective(current_vfe, &pi, &target, &precision)?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        // Free-energy block with the action prior frozen at its pre-sweep value.
        cavi_sweep(&spaces, &mut phi, h, prior)?;
        let next_vfe = vfe(&spaces, &phi, h, prior)?;
        let sweep_delta = current_vfe - next_vfe;
        current_vfe = next_vfe;

        (target, values) = prior_target(&phi, gamma_of(&precision))?;
        if let (Some(post), Some(pr), Some(table)) = (precision.as_mut(), opts.precision.as_ref(), values.as_ref()) {
            // Rate correction by how much the current policy beats a uniform one.
            let uniform = vec![1.0 / table.values.len() as f64; table.values.len()];
            let advantage = expected_value(table, pi.probs()) - expected_value(table, &uniform);
            let rate_star = (pr.rate - advantage).max(1e-3 * pr.rate);
            post.rate = opts.damping * post.rate + (1.0 - opts.damping) * rate_star;
            (target, values) = prior_target(&phi, post.mean())?;
        }
        pi = target.clone();

        let next_obj = objective(current_vfe, &pi, &target, &precision)?;
        let obj_delta = obj - next_obj;
        obj = next_obj;
        trace.push(obj);
        if obj_delta.abs() < opts.tol && sweep_delta.abs() < opts.cavi.tol {
            converged = true;
            break;
        }
    }

    let fit = ActiveFit {
        params: phi,
        precision,
        policy: pi,
        values,
        n_action: spaces.n_action,
        len,
        vfe: current_vfe,
        report: ActiveFitReport {
            objective_trace: trace,
            converged,
            iterations,
        },
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::ActiveNonConvergence(Box::new(fit)))
    }
}

/// The policy for the next action: the optimized sequence distribution
/// marginalized to its first action.
pub fn act(fit: &ActiveFit) -> Categorical {
    first_action_marginal(fit.n_action, fit.len, &fit.policy)
}
