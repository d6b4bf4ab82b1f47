//! A uniform query interface over complete posteriors.
//!
//! Exact, variational and Thompson posteriors all reduce to a weighted list of
//! components, each a distribution over the last environment state plus a
//! parameter belief. Future predictives integrate the parameters exactly along
//! every enumerated path with sequential Pólya updates, so repeated use of a
//! parameter row is accounted for.

use crate::error::{Error, Result};
use crate::model::{ModelSpaces, ParamBelief};
use crate::par::Exec;
use crate::prob::Categorical;

/// Default cap on enumerated table entries.
pub const DEFAULT_CAP: usize = 1_000_000;

/// Below this an environment path counts as impossible for conditioning.
pub const NULL_EVENT: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewComponent {
    pub weight: f64,
    /// Distribution of the environment state just before the future segment.
    pub start: Categorical,
    pub belief: ParamBelief,
    /// Index of the prior mixture component this came from.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorView {
    pub spaces: ModelSpaces,
    pub components: Vec<ViewComponent>,
    pub cap: usize,
    pub exec: Exec,
}

impl PosteriorView {
    pub fn new(spaces: ModelSpaces, components: Vec<ViewComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("view has no components".into()));
        }
        for c in &components {
            c.belief.check(&spaces)?;
            if c.start.len() != spaces.n_env {
                return Err(Error::ShapeMismatch(format!(
                    "start distribution over {} states, model has {}",
                    c.start.len(),
                    spaces.n_env
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0 && total.is_finite()) || components.iter().any(|c| c.weight < 0.0) {
            return Err(Error::InvalidDistribution("component weights".into()));
        }
        let components = components
            .into_iter()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
        Ok(Self {
            spaces,
            components,
            cap: DEFAULT_CAP,
            exec: Exec::default(),
        })
    }

    /// A single component with the given start distribution.
    pub fn single(spaces: ModelSpaces, start: Categorical, belief: ParamBelief) -> Result<Self> {
        Self::new(
            spaces,
            vec![ViewComponent {
                weight: 1.0,
                start,
                belief,
                group: 0,
            }],
        )
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn check_actions(&self, actions: &[usize]) -> Result<()> {
        if let Some(&a) = actions.iter().find(|&&a| a >= self.spaces.n_action) {
            return Err(Error::IndexOutOfRange {
                what: "action",
                index: a,
                size: self.spaces.n_action,
            });
        }
        let size = (self.spaces.n_env as f64 * self.spaces.n_sensor as f64).powi(actions.len() as i32);
        if size > self.cap as f64 {
            return Err(Error::complexity("future path table", size, self.cap));
        }
        Ok(())
    }

    /// The joint predictive of one component over (environment path, sensor path).
    pub fn component_joint(&self, index: usize, actions: &[usize]) -> Result<JointPredictive> {
        self.check_actions(actions)?;
        Ok(self.component_table(&self.components[index], actions))
    }

    fn component_table(&self, c: &ViewComponent, actions: &[usize]) -> JointPredictive {
        let mut table = JointPredictive::zeros(self.spaces.n_env, self.spaces.n_sensor, actions.len());
        let mut belief = c.belief.clone();
        let mut walk = Walk {
            spaces: &self.spaces,
            actions,
            sensor_paths: table.n_sensor_paths(),
            out: &mut table.probs,
        };
        for (e, &p) in c.start.probs().iter().enumerate() {
            if p > 0.0 {
                walk.fill(&mut belief, 0, e, 0, 0, p);
            }
        }
        table
    }

    /// Joint predictives of every component, in component order.
    pub fn component_joints(&self, actions: &[usize]) -> Result<Vec<JointPredictive>> {
        self.check_actions(actions)?;
        Ok(self
            .exec
            .map(&self.components, |c| self.component_table(c, actions)))
    }

    /// The mixture joint predictive over (environment path, sensor path).
    pub fn joint(&self, actions: &[usize]) -> Result<JointPredictive> {
        let parts = self.component_joints(actions)?;
        Ok(self.mix(&parts))
    }

    pub(crate) fn mix(&self, parts: &[JointPredictive]) -> JointPredictive {
        let mut out = JointPredictive::zeros(self.spaces.n_env, self.spaces.n_sensor, parts[0].len);
        for (c, part) in self.components.iter().zip(parts) {
            for (o, p) in out.probs.iter_mut().zip(&part.probs) {
                *o += c.weight * p;
            }
        }
        out
    }

    /// `q(e_{t:T} | a_{t:T})` over environment paths.
    pub fn predictive_env_dist(&self, actions: &[usize]) -> Result<Categorical> {
        Categorical::from_weights(self.joint(actions)?.env_marginal())
    }

    /// `q(s_{t:T} | a_{t:T})` over sensor paths.
    pub fn predictive_sensor_dist(&self, actions: &[usize]) -> Result<Categorical> {
        Categorical::from_weights(self.joint(actions)?.sensor_marginal())
    }

    /// `q(s_{t:T} | e_{t:T}, a_{t:T})` for one environment path.
    pub fn sensor_given_env_dist(&self, envs: &[usize], actions: &[usize]) -> Result<Categorical> {
        if envs.len() != actions.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} states for {} actions",
                envs.len(),
                actions.len()
            )));
        }
        let joint = self.joint(actions)?;
        joint.sensor_given_env(joint.env_index(envs)?)
    }

    /// Distribution of the environment state before the future segment.
    pub fn start_marginal(&self) -> Categorical {
        let mut w = vec![0.0; self.spaces.n_env];
        for c in &self.components {
            for (o, p) in w.iter_mut().zip(c.start.probs()) {
                *o += c.weight * p;
            }
        }
        Categorical::from_weights(w).expect("component starts are distributions")
    }
}

struct Walk<'a> {
    spaces: &'a ModelSpaces,
    actions: &'a [usize],
    sensor_paths: usize,
    out: &'a mut [f64],
}

impl Walk<'_> {
    fn fill(&mut self, belief: &mut ParamBelief, r: usize, prev: usize, env_idx: usize, sens_idx: usize, p: f64) {
        if r == self.actions.len() {
            self.out[env_idx * self.sensor_paths + sens_idx] += p;
            return;
        }
        let (n_env, n_sensor) = (self.spaces.n_env, self.spaces.n_sensor);
        let row = self.spaces.transition_row(self.actions[r], prev);
        for e in 0..n_env {
            let pe = belief.transition.predict(row, e);
            if pe == 0.0 {
                continue;
            }
            belief.transition.observe(row, e);
            for s in 0..n_sensor {
                let ps = belief.sensor.predict(e, s);
                if ps == 0.0 {
                    continue;
                }
                belief.sensor.observe(e, s);
                self.fill(belief, r + 1, e, env_idx * n_env + e, sens_idx * n_sensor + s, p * pe * ps);
                belief.sensor.unobserve(e, s);
            }
            belief.transition.unobserve(row, e);
        }
    }
}

/// A table over (environment path, sensor path) pairs of a fixed length.
/// Paths are numbered lexicographically with the earliest step most
/// significant; entry `env * n_sensor^len + sensor`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPredictive {
    pub n_env: usize,
    pub n_sensor: usize,
    pub len: usize,
    pub probs: Vec<f64>,
}

impl JointPredictive {
    fn zeros(n_env: usize, n_sensor: usize, len: usize) -> Self {
        let size = n_env.pow(len as u32) * n_sensor.pow(len as u32);
        Self {
            n_env,
            n_sensor,
            len,
            probs: vec![0.0; size],
        }
    }

    pub fn n_env_paths(&self) -> usize {
        self.n_env.pow(self.len as u32)
    }

    pub fn n_sensor_paths(&self) -> usize {
        self.n_sensor.pow(self.len as u32)
    }

    pub fn prob(&self, env_idx: usize, sensor_idx: usize) -> f64 {
        self.probs[env_idx * self.n_sensor_paths() + sensor_idx]
    }

    pub fn env_index(&self, envs: &[usize]) -> Result<usize> {
        path_index(envs, self.n_env, "environment state")
    }

    pub fn sensor_index(&self, sensors: &[usize]) -> Result<usize> {
        path_index(sensors, self.n_sensor, "sensor value")
    }

    pub fn env_marginal(&self) -> Vec<f64> {
        self.probs
            .chunks(self.n_sensor_paths())
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn sensor_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_sensor_paths()];
        for row in self.probs.chunks(self.n_sensor_paths()) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    pub fn sensor_given_env(&self, env_idx: usize) -> Result<Categorical> {
        let n = self.n_sensor_paths();
        let row = &self.probs[env_idx * n..(env_idx + 1) * n];
        let total: f64 = row.iter().sum();
        if total < NULL_EVENT {
            return Err(Error::ConditioningOnNullEvent { prob: total });
        }
        Categorical::from_weights(row.to_vec())
    }

    /// Joint of (environment, sensor) at future offset `r`, laid out `e * n_sensor + s`.
    pub fn step_env_sensor(&self, r: usize) -> Vec<f64> {
        let ns = self.n_sensor_paths();
        let e_stride = self.n_env.pow((self.len - 1 - r) as u32);
        let s_stride = self.n_sensor.pow((self.len - 1 - r) as u32);
        let mut out = vec![0.0; self.n_env * self.n_sensor];
        for (ei, row) in self.probs.chunks(ns).enumerate() {
            let e = (ei / e_stride) % self.n_env;
            for (si, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    out[e * self.n_sensor + (si / s_stride) % self.n_sensor] += p;
                }
            }
        }
        out
    }

    /// Sensor marginal at future offset `r`.
    pub fn step_sensor(&self, r: usize) -> Vec<f64> {
        let stride = self.n_sensor.pow((self.len - 1 - r) as u32);
        let mut out = vec![0.0; self.n_sensor];
        for (si, p) in self.sensor_marginal().into_iter().enumerate() {
            out[(si / stride) % self.n_sensor] += p;
        }
        out
    }

    /// `sum p(e,s) log p(s|e)` over whole paths, the negative conditional entropy.
    pub fn neg_conditional_entropy(&self) -> f64 {
        let ns = self.n_sensor_paths();
        let mut acc = 0.0;
        for row in self.probs.chunks(ns) {
            let pe: f64 = row.iter().sum();
            if pe > 0.0 {
                for &p in row {
                    if p > 0.0 {
                        acc += p * (p / pe).ln();
                    }
                }
            }
        }
        acc.min(0.0)
    }

    /// The per-step version: sum over offsets of `sum p(e_r,s_r) log p(s_r|e_r)`.
    pub fn neg_conditional_entropy_per_step(&self) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.len {
            let js = self.step_env_sensor(r);
            for row in js.chunks(self.n_sensor) {
                let pe: f64 = row.iter().sum();
                if pe > 0.0 {
                    for &p in row {
                        if p > 0.0 {
                            acc += p * (p / pe).ln();
                        }
                    }
                }
            }
        }
        acc.min(0.0)
    }
}

fn path_index(path: &[usize], base: usize, what: &'static str) -> Result<usize> {
    path.iter().try_fold(0usize, |acc, &x| {
        if x < base {
            Ok(acc * base + x)
        } else {
            Err(Error::IndexOutOfRange {
                what,
                index: x,
                size: base,
            })
        }
    })
}

/// Digits of a lexicographic path index, earliest step first.
pub fn path_digits(mut index: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = index % base;
        index /= base;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Block, ModelSpaces, ParamBelief};
    use crate::prob::ConditionalTable;

    fn spaces() -> ModelSpaces {
        ModelSpaces::new(2, 2, 2).unwrap()
    }

    #[test]
    fn joint_sums_to_one_and_marginals_cohere() {
        let sp = spaces();
        let belief = ParamBelief::symmetric(&sp, 1.0).unwrap();
        let view = PosteriorView::single(sp, Categorical::uniform(2), belief).unwrap();
        let j = view.joint(&[0, 1, 1]).unwrap();
        assert!((j.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let first = j.step_sensor(0);
        let one = view.joint(&[0]).unwrap().sensor_marginal();
        assert!((first[0] - one[0]).abs() < 1e-12);
    }

    #[test]
    fn deterministic_known_parameters_give_delta() {
        let sp = spaces();
        let flip = ConditionalTable::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let belief = ParamBelief::new(
            &sp,
            Block::known(ConditionalTable::identity(2)),
            Block::known(flip),
            Block::symmetric(1, 2, 1.0).unwrap(),
        )
        .unwrap();
        let view = PosteriorView::single(sp, Categorical::delta(2, 0), belief).unwrap();
        let env = view.predictive_env_dist(&[1, 0, 1]).unwrap();
        assert_eq!(path_digits(env.argmax(), 2, 3), vec![1, 1, 0]);
        assert_eq!(env.prob(env.argmax()), 1.0);
        let sens = view.sensor_given_env_dist(&[1, 1, 0], &[1, 0, 1]).unwrap();
        assert_eq!(path_digits(sens.argmax(), 2, 3), vec![1, 1, 0]);
        assert!(matches!(
            view.sensor_given_env_dist(&[0, 0, 0], &[1, 0, 1]),
            Err(Error::ConditioningOnNullEvent { .. })
        ));
    }

    #[test]
    fn cap_refuses() {
        let sp = spaces();
        let view = PosteriorView::single(sp, Categorical::uniform(2), ParamBelief::symmetric(&sp, 1.0).unwrap())
            .unwrap()
            .with_cap(100);
        assert!(view.joint(&[0, 0, 0, 0]).unwrap_err().is_complexity());
        assert!(view.joint(&[0, 0, 0]).is_ok());
    }
}
