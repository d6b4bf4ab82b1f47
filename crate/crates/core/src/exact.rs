//! Exact Bayesian inference over environment-state histories with conjugate
//! parameter posteriors.
//!
//! The posterior factor is built by filtering: each observed step extends
//! every entry by every next state, scores it with the sequential Pólya
//! predictives of the transition and sensor rows, and merges entries that
//! agree on prior component, last state and all parameter counts. Merged
//! entries predict identically, so nothing observable changes.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::{BlockSet, ModelPrior, ModelSpaces, ParamBelief};
use crate::pa_loop::History;
use crate::prob::{logsumexp, Categorical};
use crate::view::{PosteriorView, ViewComponent, DEFAULT_CAP};

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEntry {
    pub weight: f64,
    /// Index of the prior mixture component.
    pub component: usize,
    pub last_env: usize,
    /// Prior plus the counts read off this entry's state history.
    pub belief: ParamBelief,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosteriorFactor {
    pub spaces: ModelSpaces,
    pub t: usize,
    pub entries: Vec<PosteriorEntry>,
    pub log_evidence: f64,
    pub cap: usize,
}

type MergeKey = (usize, usize, Vec<u32>);

struct Candidates {
    map: IndexMap<MergeKey, (f64, ParamBelief)>,
    max_log: f64,
}

impl Candidates {
    fn new() -> Self {
        Self {
            map: IndexMap::new(),
            max_log: f64::NEG_INFINITY,
        }
    }
}

impl ExactPosteriorFactor {
    /// Posterior factor after observing `s_0` only.
    pub fn initial(prior: &ModelPrior, s0: usize, cap: usize) -> Result<Self> {
        let sp = prior.spaces;
        check_sensor(&sp, s0)?;
        let needed = (prior.components.len() * sp.n_env) as f64;
        if needed > cap as f64 {
            return Err(Error::complexity("posterior entries", needed, cap));
        }
        let mut raw: Vec<(MergeKey, f64, ParamBelief)> = Vec::new();
        for (c, (w, belief)) in prior.components.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            for e in 0..sp.n_env {
                let p = belief.initial.predict(0, e) * belief.sensor.predict(e, s0);
                if p <= 0.0 {
                    continue;
                }
                let mut b = belief.clone();
                b.initial.observe(0, e);
                b.sensor.observe(e, s0);
                raw.push(((c, e, b.counts_key(BlockSet::ALL)), w.ln() + p.ln(), b));
            }
        }
        Self::normalize(sp, 1, raw, 0.0, cap)
    }

    fn normalize(
        spaces: ModelSpaces,
        t: usize,
        raw: Vec<(MergeKey, f64, ParamBelief)>,
        log_evidence_before: f64,
        cap: usize,
    ) -> Result<Self> {
        let mut cand = Candidates::new();
        for (_, lw, _) in &raw {
            cand.max_log = cand.max_log.max(*lw);
        }
        if !cand.max_log.is_finite() {
            return Err(Error::ZeroEvidence);
        }
        for (key, lw, b) in raw {
            let w = (lw - cand.max_log).exp();
            cand.map
                .entry(key)
                .and_modify(|(acc, _)| *acc += w)
                .or_insert((w, b));
        }
        let z: f64 = cand.map.values().map(|(w, _)| w).sum();
        let entries = cand
            .map
            .into_iter()
            .map(|((component, last_env, _), (w, belief))| PosteriorEntry {
                weight: w / z,
                component,
                last_env,
                belief,
            })
            .collect();
        Ok(Self {
            spaces,
            t,
            entries,
            log_evidence: log_evidence_before + cand.max_log + z.ln(),
            cap,
        })
    }

    /// Bayes update with the next action and the sensor value it produced.
    pub fn update(&self, action: usize, sensor: usize) -> Result<Self> {
        let sp = self.spaces;
        check_sensor(&sp, sensor)?;
        check_action(&sp, action)?;
        let needed = (self.entries.len() * sp.n_env) as f64;
        if needed > self.cap as f64 {
            return Err(Error::complexity("posterior entries", needed, self.cap));
        }
        let mut raw = Vec::with_capacity(self.entries.len() * sp.n_env);
        for entry in &self.entries {
            let row = sp.transition_row(action, entry.last_env);
            for e in 0..sp.n_env {
                let p = entry.belief.transition.predict(row, e) * entry.belief.sensor.predict(e, sensor);
                if p <= 0.0 {
                    continue;
                }
                let mut b = entry.belief.clone();
                b.transition.observe(row, e);
                b.sensor.observe(e, sensor);
                raw.push((
                    (entry.component, e, b.counts_key(BlockSet::ALL)),
                    entry.weight.ln() + p.ln(),
                    b,
                ));
            }
        }
        Self::normalize(sp, self.t + 1, raw, self.log_evidence, self.cap)
    }

    /// One-step posterior predictive `q(s_t | a_t, history)`.
    pub fn one_step_predictive(&self, action: usize) -> Result<Categorical> {
        self.view().predictive_sensor_dist(&[action])
    }

    /// The complete-posterior view used by predictives and motivations.
    pub fn view(&self) -> PosteriorView {
        let components = self
            .entries
            .iter()
            .map(|e| ViewComponent {
                weight: e.weight,
                start: Categorical::delta(self.spaces.n_env, e.last_env),
                belief: e.belief.clone(),
                group: e.component,
            })
            .collect();
        PosteriorView::new(self.spaces, components)
            .expect("posterior entries are valid")
            .with_cap(self.cap)
    }

    /// Posterior mass of each prior mixture component.
    pub fn component_weights(&self, n_components: usize) -> Vec<f64> {
        let mut w = vec![0.0; n_components];
        for e in &self.entries {
            w[e.component] += e.weight;
        }
        w
    }

    /// Marginal posterior of the selected parameter blocks as a mixture of
    /// Dirichlet (or known) blocks; entries with equal counts are collapsed.
    pub fn parameter_posterior(&self, subset: BlockSet) -> Vec<ParameterComponent> {
        let mut map: IndexMap<(usize, Vec<u32>), ParameterComponent> = IndexMap::new();
        for e in &self.entries {
            let key = (e.component, e.belief.counts_key(subset));
            map.entry(key)
                .and_modify(|pc| pc.weight += e.weight)
                .or_insert_with(|| ParameterComponent {
                    weight: e.weight,
                    component: e.component,
                    sensor: subset.sensor.then(|| e.belief.sensor.clone()),
                    transition: subset.transition.then(|| e.belief.transition.clone()),
                    initial: subset.initial.then(|| e.belief.initial.clone()),
                });
        }
        map.into_values().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterComponent {
    pub weight: f64,
    pub component: usize,
    pub sensor: Option<crate::model::Block>,
    pub transition: Option<crate::model::Block>,
    pub initial: Option<crate::model::Block>,
}

fn check_sensor(sp: &ModelSpaces, s: usize) -> Result<()> {
    if s >= sp.n_sensor {
        return Err(Error::IndexOutOfRange {
            what: "sensor value",
            index: s,
            size: sp.n_sensor,
        });
    }
    Ok(())
}

fn check_action(sp: &ModelSpaces, a: usize) -> Result<()> {
    if a >= sp.n_action {
        return Err(Error::IndexOutOfRange {
            what: "action",
            index: a,
            size: sp.n_action,
        });
    }
    Ok(())
}

/// The posterior factor `q(e_{<t}, theta | history)` in merged form.
pub fn compute_posterior_factor(prior: &ModelPrior, history: &History, cap: usize) -> Result<ExactPosteriorFactor> {
    history.check_spaces(prior.spaces.n_sensor, prior.spaces.n_action)?;
    let s = history.sensors();
    let mut f = ExactPosteriorFactor::initial(prior, s[0], cap)?;
    for (&a, &s) in history.actions().iter().zip(&s[1..]) {
        f = f.update(a, s)?;
    }
    Ok(f)
}

/// `log q(s_{<t} | a_{<t})` under the prior.
pub fn log_evidence(prior: &ModelPrior, history: &History, cap: usize) -> Result<f64> {
    compute_posterior_factor(prior, history, cap).map(|f| f.log_evidence)
}

pub fn log_evidence_default(prior: &ModelPrior, history: &History) -> Result<f64> {
    log_evidence(prior, history, DEFAULT_CAP)
}

/// One environment-state history with its posterior weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWeight {
    pub component: usize,
    pub envs: Vec<usize>,
    pub weight: f64,
    pub belief: ParamBelief,
}

/// Unmerged posterior over every environment-state history `e_{0..t-1}`,
/// enumerated depth first. Histories with zero probability are dropped.
/// Returns the entries and the log evidence.
pub fn history_weights(prior: &ModelPrior, history: &History, cap: usize) -> Result<(Vec<HistoryWeight>, f64)> {
    let sp = prior.spaces;
    history.check_spaces(sp.n_sensor, sp.n_action)?;
    let needed = prior.components.len() as f64 * (sp.n_env as f64).powi(history.t() as i32);
    if needed > cap as f64 {
        return Err(Error::complexity("state histories", needed, cap));
    }
    let mut leaves: Vec<(usize, Vec<usize>, f64, ParamBelief)> = Vec::new();
    for (c, (w, belief)) in prior.components.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        let mut b = belief.clone();
        let mut path = Vec::with_capacity(history.t());
        enumerate(&sp, history, &mut b, &mut path, w.ln(), c, &mut leaves);
    }
    if leaves.is_empty() {
        return Err(Error::ZeroEvidence);
    }
    let logs: Vec<f64> = leaves.iter().map(|l| l.2).collect();
    let lz = logsumexp(&logs);
    let out = leaves
        .into_iter()
        .map(|(component, envs, lw, belief)| HistoryWeight {
            component,
            envs,
            weight: (lw - lz).exp(),
            belief,
        })
        .collect();
    Ok((out, lz))
}

fn enumerate(
    sp: &ModelSpaces,
    h: &History,
    b: &mut ParamBelief,
    path: &mut Vec<usize>,
    lw: f64,
    component: usize,
    out: &mut Vec<(usize, Vec<usize>, f64, ParamBelief)>,
) {
    let tau = path.len();
    if tau == h.t() {
        out.push((component, path.clone(), lw, b.clone()));
        return;
    }
    let s = h.sensors()[tau];
    for e in 0..sp.n_env {
        let (row, p_env) = if tau == 0 {
            (0, b.initial.predict(0, e))
        } else {
            let row = sp.transition_row(h.actions()[tau - 1], path[tau - 1]);
            (row, b.transition.predict(row, e))
        };
        let p = p_env * b.sensor.predict(e, s);
        if p <= 0.0 {
            continue;
        }
        if tau == 0 {
            b.initial.observe(row, e);
        } else {
            b.transition.observe(row, e);
        }
        b.sensor.observe(e, s);
        path.push(e);
        enumerate(sp, h, b, path, lw + p.ln(), component, out);
        path.pop();
        b.sensor.unobserve(e, s);
        if tau == 0 {
            b.initial.unobserve(row, e);
        } else {
            b.transition.unobserve(row, e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Block;
    use crate::prob::DirichletParams;

    fn one_state_prior() -> ModelPrior {
        let sp = ModelSpaces::new(1, 2, 2).unwrap();
        ModelPrior::symmetric(sp, 1.0).unwrap()
    }

    #[test]
    fn single_state_counts_and_evidence() {
        let prior = one_state_prior();
        let h = History::from_parts(vec![0, 0], vec![1]).unwrap();
        let f = compute_posterior_factor(&prior, &h, DEFAULT_CAP).unwrap();
        assert_eq!(f.entries.len(), 1);
        assert_eq!(f.entries[0].weight, 1.0);
        let Block::Dirichlet(d) = &f.entries[0].belief.sensor else { panic!() };
        assert_eq!(d.row_alpha(0), vec![3.0, 1.0]);
        assert!((f.log_evidence - (1.0f64 / 3.0).ln()).abs() < 1e-12);

        let h0 = History::init(1);
        let l0 = log_evidence(&prior, &h0, DEFAULT_CAP).unwrap();
        assert!((l0 - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn merged_and_unmerged_agree() {
        let sp = ModelSpaces::new(2, 2, 2).unwrap();
        let prior = ModelPrior::single(
            sp,
            ParamBelief::new(
                &sp,
                Block::dirichlet(&[
                    DirichletParams::new(vec![2.0, 0.5]).unwrap(),
                    DirichletParams::new(vec![0.7, 1.5]).unwrap(),
                ])
                .unwrap(),
                Block::symmetric(4, 2, 0.8).unwrap(),
                Block::symmetric(1, 2, 1.0).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        let h = History::parse("0 1 1 0 1 1 0").unwrap();
        let f = compute_posterior_factor(&prior, &h, DEFAULT_CAP).unwrap();
        let (hw, lz) = history_weights(&prior, &h, DEFAULT_CAP).unwrap();
        assert!((f.log_evidence - lz).abs() < 1e-12);
        assert!(f.entries.len() <= hw.len());
        let total: f64 = f.entries.iter().map(|e| e.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // The last-state marginal agrees between the two routes.
        for last in 0..2 {
            let a: f64 = f.entries.iter().filter(|e| e.last_env == last).map(|e| e.weight).sum();
            let b: f64 = hw.iter().filter(|w| w.envs[3] == last).map(|w| w.weight).sum();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_consistency() {
        let sp = ModelSpaces::new(2, 2, 2).unwrap();
        let prior = ModelPrior::symmetric(sp, 1.0).unwrap();
        let h = History::parse("1 0 1 1 0").unwrap();
        let f = compute_posterior_factor(&prior, &h, DEFAULT_CAP).unwrap();
        for a in 0..2 {
            let pred = f.one_step_predictive(a).unwrap();
            for s in 0..2 {
                let g = compute_posterior_factor(&prior, &h.append(s, a), DEFAULT_CAP).unwrap();
                assert!(((g.log_evidence - f.log_evidence).exp() - pred.prob(s)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_evidence_and_cap() {
        let sp = ModelSpaces::new(1, 2, 1).unwrap();
        let theta = crate::model::ThetaPoint {
            sensor: crate::prob::ConditionalTable::from_rows(vec![vec![1.0, 0.0]]).unwrap(),
            transition: crate::prob::ConditionalTable::identity(1),
            initial: Categorical::delta(1, 0),
        };
        let prior = ModelPrior::single(sp, ParamBelief::known(&sp, &theta).unwrap()).unwrap();
        assert!(matches!(
            compute_posterior_factor(&prior, &History::init(1), DEFAULT_CAP),
            Err(Error::ZeroEvidence)
        ));

        let sp = ModelSpaces::new(3, 2, 1).unwrap();
        let prior = ModelPrior::symmetric(sp, 1.0).unwrap();
        let h = History::parse("0 0 1 0 1 0 0").unwrap();
        assert!(history_weights(&prior, &h, 50).unwrap_err().is_complexity());
    }

    #[test]
    fn parameter_posterior_collapses_equal_counts() {
        let sp = ModelSpaces::new(2, 2, 1).unwrap();
        let prior = ModelPrior::symmetric(sp, 1.0).unwrap();
        let f = compute_posterior_factor(&prior, &History::init(0), DEFAULT_CAP).unwrap();
        // Only the transition block is untouched at t = 1, so both states collapse.
        let pp = f.parameter_posterior(BlockSet {
            sensor: false,
            transition: true,
            initial: false,
        });
        assert_eq!(pp.len(), 1);
        assert!((pp[0].weight - 1.0).abs() < 1e-15);
        assert_eq!(f.parameter_posterior(BlockSet::ALL).len(), 2);
    }
}
