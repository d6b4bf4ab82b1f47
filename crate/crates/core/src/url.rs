//! Finite environment classes with Bayes-mixture weights, and their embedding
//! into the generic model with histories as environment states.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Block, ModelPrior, ModelSpaces, ParamBelief};
use crate::pa_loop::{EnvironmentSpec, History};
use crate::prob::{Categorical, ConditionalTable};

/// One member of the class: a conditional predictor of the next sensor value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrlComponent {
    /// A hidden-state environment; predictions filter over its states.
    Pomdp(EnvironmentSpec),
    /// The next sensor value depends on the action and the previous sensor
    /// value only. Rows are indexed by `action * n_sensor + previous`.
    Markov {
        initial: Categorical,
        table: ConditionalTable,
    },
}

impl UrlComponent {
    fn check(&self, n_sensor: usize, n_action: usize) -> Result<()> {
        let ok = match self {
            UrlComponent::Pomdp(env) => env.n_sensor() == n_sensor && env.n_action == n_action,
            UrlComponent::Markov { initial, table } => {
                initial.len() == n_sensor && table.n_rows() == n_action * n_sensor && table.n_targets() == n_sensor
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "class member does not use {n_sensor} sensor values and {n_action} actions"
            )))
        }
    }

    /// `p(s_0 | nu)`.
    pub fn predict_initial(&self) -> Categorical {
        match self {
            UrlComponent::Pomdp(env) => {
                let w = (0..env.n_sensor())
                    .map(|s| (0..env.n_env()).map(|e| env.initial.prob(e) * env.sensor.prob(e, s)).sum())
                    .collect();
                Categorical::from_weights(w).expect("mixture of sensor rows")
            }
            UrlComponent::Markov { initial, .. } => initial.clone(),
        }
    }

    /// `p(s_t | a_t, history, nu)`, or `None` when the history itself has
    /// probability zero under this member.
    pub fn predict_next(&self, h: &History, a: usize) -> Option<Categorical> {
        match self {
            UrlComponent::Pomdp(env) => {
                let belief = filter(env, h)?;
                let ne = env.n_env();
                let mut w = vec![0.0; env.n_sensor()];
                for (e, &b) in belief.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    for e2 in 0..ne {
                        let pt = env.transition_row(a, e).prob(e2);
                        if pt == 0.0 {
                            continue;
                        }
                        for (s, o) in w.iter_mut().enumerate() {
                            *o += b * pt * env.sensor.prob(e2, s);
                        }
                    }
                }
                Categorical::from_weights(w).ok()
            }
            UrlComponent::Markov { table, initial } => {
                Some(table.row(a * initial.len() + h.last_sensor()).clone())
            }
        }
    }
}

/// Posterior over hidden states after a history, or `None` if impossible.
fn filter(env: &EnvironmentSpec, h: &History) -> Option<Vec<f64>> {
    let ne = env.n_env();
    let s = h.sensors();
    let mut b: Vec<f64> = (0..ne).map(|e| env.initial.prob(e) * env.sensor.prob(e, s[0])).collect();
    normalize(&mut b)?;
    for (&a, &s) in h.actions().iter().zip(&s[1..]) {
        let mut next = vec![0.0; ne];
        for (e, &pb) in b.iter().enumerate() {
            if pb == 0.0 {
                continue;
            }
            for (e2, n) in next.iter_mut().enumerate() {
                *n += pb * env.transition_row(a, e).prob(e2);
            }
        }
        for (e2, n) in next.iter_mut().enumerate() {
            *n *= env.sensor.prob(e2, s);
        }
        normalize(&mut next)?;
        b = next;
    }
    Some(b)
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let z: f64 = v.iter().sum();
    if z <= 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= z);
    Some(())
}

/// A finite class of environments with mixture weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvClass {
    pub n_sensor: usize,
    pub n_action: usize,
    pub components: Vec<UrlComponent>,
    pub weights: Categorical,
}

impl EnvClass {
    pub fn new(n_sensor: usize, n_action: usize, components: Vec<UrlComponent>, weights: Categorical) -> Result<Self> {
        if components.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} class members",
                weights.len(),
                components.len()
            )));
        }
        for c in &components {
            c.check(n_sensor, n_action)?;
        }
        Ok(Self {
            n_sensor,
            n_action,
            components,
            weights,
        })
    }

    fn reweight(&self, likelihoods: Vec<f64>) -> Result<Self> {
        let w: Vec<f64> = self.weights.probs().iter().zip(&likelihoods).map(|(w, l)| w * l).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroEvidence);
        }
        Ok(Self {
            weights: Categorical::from_weights(w)?,
            ..self.clone()
        })
    }

    /// Bayes update on the first sensor value.
    pub fn observe_initial(&self, s0: usize) -> Result<Self> {
        self.check_sensor(s0)?;
        self.reweight(self.components.iter().map(|c| c.predict_initial().prob(s0)).collect())
    }

    fn check_sensor(&self, s: usize) -> Result<()> {
        if s >= self.n_sensor {
            return Err(Error::IndexOutOfRange {
                what: "sensor value",
                index: s,
                size: self.n_sensor,
            });
        }
        Ok(())
    }

    fn member_predictions(&self, h: &History, a: usize) -> Result<Vec<Option<Categorical>>> {
        h.check_spaces(self.n_sensor, self.n_action)?;
        if a >= self.n_action {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                size: self.n_action,
            });
        }
        Ok(self.components.iter().map(|c| c.predict_next(h, a)).collect())
    }

    /// `sum_nu p(s | a, h, nu) w(nu)`.
    pub fn mixture_predict(&self, h: &History, a: usize) -> Result<Categorical> {
        let preds = self.member_predictions(h, a)?;
        let mut out = vec![0.0; self.n_sensor];
        for (w, p) in self.weights.probs().iter().zip(&preds) {
            if let (true, Some(p)) = (*w > 0.0, p) {
                for (o, x) in out.iter_mut().zip(p.probs()) {
                    *o += w * x;
                }
            }
        }
        Categorical::from_weights(out).map_err(|_| Error::ZeroEvidence)
    }
}

/// `w'(nu) = p(s | a, h, nu) w(nu) / sum_nu' p(s | a, h, nu') w(nu')`.
pub fn mixture_update(spec: &EnvClass, s: usize, a: usize, h: &History) -> Result<EnvClass> {
    spec.check_sensor(s)?;
    let preds = spec.member_predictions(h, a)?;
    spec.reweight(preds.iter().map(|p| p.as_ref().map_or(0.0, |p| p.prob(s))).collect())
}

/// Weights after the whole history, one Bayes update per sensor value.
pub fn sequential_posterior(spec: &EnvClass, h: &History) -> Result<EnvClass> {
    let mut cur = spec.observe_initial(h.sensors()[0])?;
    for t in 1..h.t() {
        cur = mixture_update(&cur, h.sensors()[t], h.actions()[t - 1], &h.prefix(t))?;
    }
    Ok(cur)
}

/// The class embedded in the generic model: every history with up to
/// `max_len` sensor values is an environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedModel {
    pub prior: ModelPrior,
    pub states: Vec<History>,
    pub index: IndexMap<History, usize>,
    pub max_len: usize,
}

/// Builds the history-state model. The sensor model reads off the last
/// sensor value; transitions append the action and the next sensor value with
/// the member's predictive probability; histories at `max_len` loop on
/// themselves. There is one known-parameter prior component per member.
pub fn embed_history_env(spec: &EnvClass, max_len: usize, cap: usize) -> Result<EmbeddedModel> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("history states need max_len >= 1".into()));
    }
    let (ns, na) = (spec.n_sensor, spec.n_action);
    let mut needed = 0.0;
    for k in 1..=max_len {
        needed += (ns as f64).powi(k as i32) * (na as f64).powi(k as i32 - 1);
    }
    if needed > cap as f64 {
        return Err(Error::complexity("history states", needed, cap));
    }
    let mut states: Vec<History> = (0..ns).map(History::init).collect();
    let mut frontier = 0;
    for _ in 1..max_len {
        let end = states.len();
        for i in frontier..end {
            for a in 0..na {
                for s in 0..ns {
                    let next = states[i].append(s, a);
                    states.push(next);
                }
            }
        }
        frontier = end;
    }
    let index: IndexMap<History, usize> = states.iter().cloned().enumerate().map(|(i, h)| (h, i)).collect();
    let ne = states.len();
    let spaces = ModelSpaces::new(ne, ns, na)?;
    let sensor = Block::known(ConditionalTable::new(
        states.iter().map(|h| Categorical::delta(ns, h.last_sensor())).collect(),
    )?);

    let mut beliefs = Vec::with_capacity(spec.components.len());
    for nu in &spec.components {
        let mut rows = vec![Categorical::uniform(ne); na * ne];
        for a in 0..na {
            for (e, h) in states.iter().enumerate() {
                let row = &mut rows[spaces.transition_row(a, e)];
                if h.t() == max_len {
                    *row = Categorical::delta(ne, e);
                    continue;
                }
                let mut w = vec![0.0; ne];
                match nu.predict_next(h, a) {
                    Some(p) => {
                        for s in 0..ns {
                            w[index[&h.append(s, a)]] = p.prob(s);
                        }
                    }
                    // Unreachable under this member: spread over the extensions.
                    None => (0..ns).for_each(|s| w[index[&h.append(s, a)]] = 1.0),
                }
                *row = Categorical::from_weights(w)?;
            }
        }
        let init = nu.predict_initial();
        let mut w0 = vec![0.0; ne];
        w0[..ns].copy_from_slice(init.probs());
        beliefs.push(ParamBelief::new(
            &spaces,
            sensor.clone(),
            Block::known(ConditionalTable::new(rows)?),
            Block::known(ConditionalTable::new(vec![Categorical::new(w0)?])?),
        )?);
    }
    Ok(EmbeddedModel {
        prior: ModelPrior::mixture(spaces, spec.weights.clone(), beliefs)?,
        states,
        index,
        max_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_member(p0: f64) -> UrlComponent {
        let c = Categorical::new(vec![p0, 1.0 - p0]).unwrap();
        UrlComponent::Markov {
            initial: c.clone(),
            table: ConditionalTable::new(vec![c; 4]).unwrap(),
        }
    }

    fn class(p: f64, q: f64) -> EnvClass {
        EnvClass::new(2, 2, vec![const_member(p), const_member(q)], Categorical::uniform(2)).unwrap()
    }

    #[test]
    fn deterministic_exclusion() {
        let c = class(1.0, 0.0);
        let h = History::init(0);
        let u = mixture_update(&c, 0, 1, &h).unwrap();
        assert_eq!(u.weights.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn noisy_bayes_arithmetic() {
        let c = class(0.9, 0.1);
        let u = mixture_update(&c, 0, 0, &History::init(1)).unwrap();
        assert!((u.weights.prob(0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn excluded_value_is_zero_evidence() {
        let c = class(1.0, 1.0);
        assert!(matches!(mixture_update(&c, 1, 0, &History::init(0)), Err(Error::ZeroEvidence)));
    }

    #[test]
    fn history_state_count() {
        let m = embed_history_env(&class(0.9, 0.2), 2, 1000).unwrap();
        // Two roots, each with four one-step extensions.
        assert_eq!(m.states.len(), 10);
        assert_eq!(m.states.iter().filter(|h| h.sensors()[0] == 0).count(), 5);
        assert!(embed_history_env(&class(0.9, 0.2), 12, 1000).unwrap_err().is_complexity());
    }

    #[test]
    fn inconsistent_transitions_have_zero_probability() {
        let m = embed_history_env(&class(0.9, 0.2), 2, 1000).unwrap();
        let sp = m.prior.spaces;
        let from = m.index[&History::init(0)];
        let wrong = m.index[&History::init(1).append(0, 1)];
        let b = &m.prior.components[0].1;
        assert_eq!(b.transition.predict(sp.transition_row(1, from), wrong), 0.0);
    }
}
