//! Model-based agents: inference, an action-value function and a selection
//! rule combined behind the [`Agent`] trait.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::active::{act, optimize, ActionTarget, ActiveOptions, GammaParams};
use crate::error::{Error, Result};
use crate::exact::{compute_posterior_factor, ExactPosteriorFactor};
use crate::model::{HorizonRule, ModelPrior};
use crate::motivation::{make_action_value, Motivation};
use crate::pa_loop::{Agent, Decision, History, StepDiagnostics};
use crate::par::Exec;
use crate::prob::Categorical;
use crate::select::{thompson_select, Selection, ValueTable, SEQUENCE_CAP};
use crate::variational::{cavi_fit, CaviOptions, VariationalFit};
use crate::view::{PosteriorView, DEFAULT_CAP};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSettings {
    pub gamma: f64,
    pub precision: Option<GammaParams>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ActiveSettings {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            precision: None,
            damping: 0.5,
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inference {
    Exact,
    Variational,
    Active(ActiveSettings),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub inference: Inference,
    pub motivation: Motivation,
    pub selection: Selection,
    pub horizon: HorizonRule,
    pub cavi: CaviOptions,
    /// Cap on posterior entries and future path tables.
    pub cap: usize,
    pub sequence_cap: usize,
    /// Use non-converged variational fits instead of failing the step.
    pub allow_nonconvergence: bool,
    pub exec: Exec,
}

impl AgentConfig {
    pub fn new(inference: Inference, motivation: Motivation, selection: Selection, horizon: HorizonRule) -> Self {
        Self {
            inference,
            motivation,
            selection,
            horizon,
            cavi: CaviOptions::default(),
            cap: DEFAULT_CAP,
            sequence_cap: SEQUENCE_CAP,
            allow_nonconvergence: false,
            exec: Exec::default(),
        }
    }

    pub fn active_options(&self, settings: &ActiveSettings, horizon_len: usize) -> ActiveOptions {
        let mut opts = ActiveOptions::new(horizon_len);
        opts.gamma = match self.selection {
            Selection::Softmax { gamma } => gamma,
            _ => settings.gamma,
        };
        opts.precision = settings.precision;
        opts.damping = settings.damping;
        opts.tol = settings.tol;
        opts.max_iter = settings.max_iter;
        opts.cavi = self.cavi;
        opts.cap = self.cap;
        opts.sequence_cap = self.sequence_cap;
        opts.target = ActionTarget::Coupled;
        opts
    }
}

/// What an agent computes at one step, before an action is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: ValueTable,
    /// Policy over the next action under the configured selection, except
    /// that Thompson sampling is replaced by argmax on the full posterior.
    pub policy: Categorical,
    pub vfe: Option<f64>,
    pub iterations: Option<usize>,
}

pub struct BayesAgent {
    prior: Arc<ModelPrior>,
    cfg: Arc<AgentConfig>,
    cache: Option<ExactPosteriorFactor>,
}

impl BayesAgent {
    pub fn new(prior: Arc<ModelPrior>, cfg: Arc<AgentConfig>) -> Self {
        Self {
            prior,
            cfg,
            cache: None,
        }
    }

    fn exact_factor(&mut self, h: &History) -> Result<&ExactPosteriorFactor> {
        let reuse = matches!(&self.cache, Some(f) if f.t + 1 == h.t());
        let next = if reuse {
            let f = self.cache.as_ref().expect("checked above");
            let t = h.t();
            f.update(h.actions()[t - 2], h.sensors()[t - 1])?
        } else {
            compute_posterior_factor(&self.prior, h, self.cfg.cap)?
        };
        Ok(self.cache.insert(next))
    }

    fn variational(&self, h: &History) -> Result<VariationalFit> {
        let single = self.prior.as_single()?;
        match cavi_fit(&self.prior.spaces, h, single, &self.cfg.cavi) {
            Err(Error::CaviNonConvergence(fit)) if self.cfg.allow_nonconvergence => Ok(*fit),
            other => other,
        }
    }

    fn view_for(&mut self, h: &History) -> Result<(PosteriorView, Option<VariationalFit>)> {
        let cfg = self.cfg.clone();
        match cfg.inference {
            Inference::Exact => Ok((self.exact_factor(h)?.view().with_exec(cfg.exec), None)),
            Inference::Variational => {
                let fit = self.variational(h)?;
                let view = fit
                    .params
                    .view(self.prior.spaces)?
                    .with_cap(cfg.cap)
                    .with_exec(cfg.exec);
                Ok((view, Some(fit)))
            }
            Inference::Active(_) => Err(Error::InvalidArgument(
                "active inference has no standalone posterior view".into(),
            )),
        }
    }

    /// The action-value table and selection policy for a history.
    pub fn evaluate(&mut self, h: &History) -> Result<Evaluation> {
        let cfg = self.cfg.clone();
        let horizon_len = cfg.horizon.future_len(h.t());
        if let Inference::Active(settings) = cfg.inference {
            let opts = cfg.active_options(&settings, horizon_len);
            let single = self.prior.as_single()?;
            let fit = match optimize(self.prior.spaces, h, single, &cfg.motivation, &opts) {
                Err(Error::ActiveNonConvergence(fit)) if cfg.allow_nonconvergence => *fit,
                other => other?,
            };
            let marginal = act(&fit);
            let policy = match cfg.selection {
                Selection::Argmax => Categorical::delta(marginal.len(), marginal.argmax()),
                _ => marginal,
            };
            let table = fit.values.clone().expect("coupled fit keeps its value table");
            return Ok(Evaluation {
                table,
                policy,
                vfe: Some(fit.vfe),
                iterations: Some(fit.report.iterations),
            });
        }
        let (view, fit) = self.view_for(h)?;
        let table = make_action_value(&view, &cfg.motivation).table(horizon_len, cfg.sequence_cap)?;
        let policy = match cfg.selection {
            Selection::Softmax { gamma } => table.softmax_policy(gamma)?,
            Selection::Argmax | Selection::Thompson => Categorical::delta(table.n_action, table.argmax().0),
        };
        Ok(Evaluation {
            table,
            policy,
            vfe: fit.as_ref().map(|f| f.report.vfe),
            iterations: fit.as_ref().map(|f| f.report.sweeps),
        })
    }
}

impl Agent for BayesAgent {
    fn act(&mut self, h: &History, rng: &mut ChaCha8Rng) -> Result<Decision> {
        if let (Selection::Thompson, false) = (self.cfg.selection, matches!(self.cfg.inference, Inference::Active(_))) {
            let cfg = self.cfg.clone();
            let horizon_len = cfg.horizon.future_len(h.t());
            let (view, fit) = self.view_for(h)?;
            let draw = thompson_select(&view, &cfg.motivation, horizon_len, cfg.sequence_cap, rng)?;
            return Ok(Decision {
                policy: Categorical::delta(view.spaces.n_action, draw.action),
                diagnostics: StepDiagnostics {
                    value_top: Some(draw.table.max_value()),
                    vfe: fit.as_ref().map(|f| f.report.vfe),
                    iterations: fit.as_ref().map(|f| f.report.sweeps),
                },
            });
        }
        let ev = self.evaluate(h)?;
        Ok(Decision {
            policy: ev.policy,
            diagnostics: StepDiagnostics {
                value_top: Some(ev.table.max_value()),
                vfe: ev.vfe,
                iterations: ev.iterations,
            },
        })
    }
}
