//! Action selection over tables of action-sequence values.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamBelief;
use crate::motivation::{make_action_value, ActionValueFn, Motivation};
use crate::par::Exec;
use crate::prob::{argmax_first, sample_index, Categorical};
use crate::view::{path_digits, PosteriorView, ViewComponent};

/// Default cap on the number of enumerated action sequences.
pub const SEQUENCE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Selection {
    Argmax,
    Softmax { gamma: f64 },
    Thompson,
}

/// Values of all action sequences of one length, indexed lexicographically
/// with the first action most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub n_action: usize,
    pub len: usize,
    pub values: Vec<f64>,
}

impl ValueTable {
    pub fn build<F>(n_action: usize, len: usize, cap: usize, exec: Exec, f: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> Result<f64> + Sync + Send,
    {
        let count = (n_action as f64).powi(len as i32);
        if count > cap as f64 {
            return Err(Error::complexity("action sequences", count, cap));
        }
        let values = exec.try_map_range(count as usize, |i| f(&path_digits(i, n_action, len)))?;
        Ok(Self { n_action, len, values })
    }

    pub fn from_values(n_action: usize, len: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_action.pow(len as u32) {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n_action}^{len} sequences",
                values.len()
            )));
        }
        Ok(Self { n_action, len, values })
    }

    pub fn sequence(&self, index: usize) -> Vec<usize> {
        path_digits(index, self.n_action, self.len)
    }

    pub fn index_of(&self, seq: &[usize]) -> usize {
        seq.iter().fold(0, |acc, &a| acc * self.n_action + a)
    }

    fn first_action(&self, index: usize) -> usize {
        index / self.n_action.pow(self.len as u32 - 1)
    }

    /// The maximizing sequence; ties go to the lexicographically smallest.
    pub fn argmax(&self) -> (usize, Vec<usize>) {
        let i = argmax_first(&self.values);
        (self.first_action(i), self.sequence(i))
    }

    pub fn max_value(&self) -> f64 {
        self.values[argmax_first(&self.values)]
    }

    /// `q(a_seq) ~ exp(gamma * Q(a_seq))`, computed with a max shift.
    pub fn softmax_sequences(&self, gamma: f64) -> Result<Categorical> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("softmax precision {gamma} must be positive and finite")));
        }
        let logits: Vec<f64> = self.values.iter().map(|v| gamma * v).collect();
        Categorical::from_log_weights(&logits)
    }

    /// The softmax over sequences marginalized to the first action.
    pub fn softmax_policy(&self, gamma: f64) -> Result<Categorical> {
        Ok(first_action_marginal(self.n_action, self.len, &self.softmax_sequences(gamma)?))
    }

    /// Sequences with their values, highest value first; ties keep index order.
    pub fn sorted_desc(&self) -> Vec<(Vec<usize>, f64)> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx.into_iter().map(|i| (self.sequence(i), self.values[i])).collect()
    }
}

/// Marginal of a distribution over action sequences on the first action.
pub fn first_action_marginal(n_action: usize, len: usize, seqs: &Categorical) -> Categorical {
    let block = n_action.pow(len as u32 - 1);
    let w = seqs.probs().chunks(block).map(|c| c.iter().sum()).collect();
    Categorical::from_weights(w).expect("marginal of a distribution")
}

pub fn argmax_select(q: &ActionValueFn, horizon_len: usize, cap: usize) -> Result<(usize, Vec<usize>)> {
    Ok(q.table(horizon_len, cap)?.argmax())
}

pub fn softmax_policy(q: &ActionValueFn, gamma: f64, horizon_len: usize, cap: usize) -> Result<Categorical> {
    q.table(horizon_len, cap)?.softmax_policy(gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThompsonDraw {
    pub action: usize,
    pub sequence: Vec<usize>,
    pub component: usize,
    pub start: usize,
    pub table: ValueTable,
}

/// Samples a component, a last environment state and a parameter point from
/// the posterior, then acts greedily for that hypothesis.
pub fn thompson_select(
    view: &PosteriorView,
    cfg: &Motivation,
    horizon_len: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ThompsonDraw> {
    if cfg.uses_parameter_posterior() {
        return Err(Error::MotivationUnsupported(cfg.name().into()));
    }
    let weights: Vec<f64> = view.components.iter().map(|c| c.weight).collect();
    let component = sample_index(&weights, rng);
    let c = &view.components[component];
    let start = sample_index(c.start.probs(), rng);
    let point = ParamBelief {
        sensor: crate::model::Block::known(c.belief.sensor.sample_point(rng)),
        transition: crate::model::Block::known(c.belief.transition.sample_point(rng)),
        initial: crate::model::Block::known(c.belief.initial.sample_point(rng)),
    };
    let point_view = PosteriorView::new(
        view.spaces,
        vec![ViewComponent {
            weight: 1.0,
            start: Categorical::delta(view.spaces.n_env, start),
            belief: point,
            group: 0,
        }],
    )?
    .with_cap(view.cap)
    .with_exec(view.exec);
    let table = make_action_value(&point_view, cfg).table(horizon_len, cap)?;
    let (action, sequence) = table.argmax();
    Ok(ThompsonDraw {
        action,
        sequence,
        component,
        start,
        table,
    })
}
