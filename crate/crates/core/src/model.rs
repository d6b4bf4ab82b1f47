//! The agent's internal generative model: spaces, horizon rule, parameter
//! blocks with Dirichlet hyperpriors, and the point-parameter predictive.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pa_loop::EnvironmentSpec;
use crate::prob::{
    expected_log, sample_dirichlet, Categorical, ConditionalTable, DirichletBlock, DirichletParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpaces {
    pub n_env: usize,
    pub n_sensor: usize,
    pub n_action: usize,
}

impl ModelSpaces {
    pub fn new(n_env: usize, n_sensor: usize, n_action: usize) -> Result<Self> {
        if n_env == 0 || n_sensor == 0 || n_action == 0 {
            return Err(Error::ShapeMismatch(format!(
                "spaces must be non-empty, got {n_env} states, {n_sensor} sensor values, {n_action} actions"
            )));
        }
        Ok(Self {
            n_env,
            n_sensor,
            n_action,
        })
    }

    pub fn transition_row(&self, action: usize, env: usize) -> usize {
        action * self.n_env + env
    }
}

/// How far ahead the model looks from step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonRule {
    /// A fixed final step.
    Fixed(usize),
    /// A horizon `n` steps beyond the current one.
    Sliding(usize),
}

impl HorizonRule {
    pub fn horizon_for(&self, t: usize) -> usize {
        match *self {
            HorizonRule::Fixed(end) => end,
            HorizonRule::Sliding(n) => t + n,
        }
    }

    /// Number of future steps `t..=horizon`, zero when the horizon lies behind.
    pub fn future_len(&self, t: usize) -> usize {
        (self.horizon_for(t) + 1).saturating_sub(t)
    }
}

/// Which parameter blocks a query refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSet {
    pub sensor: bool,
    pub transition: bool,
    pub initial: bool,
}

impl BlockSet {
    pub const ALL: BlockSet = BlockSet {
        sensor: true,
        transition: true,
        initial: true,
    };
    pub const NONE: BlockSet = BlockSet {
        sensor: false,
        transition: false,
        initial: false,
    };
}

impl Default for BlockSet {
    fn default() -> Self {
        Self::ALL
    }
}

/// One parameter block: either uncertain with Dirichlet rows or known.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dirichlet(DirichletBlock),
    Known(Arc<ConditionalTable>),
}

impl Block {
    pub fn dirichlet(rows: &[DirichletParams]) -> Result<Self> {
        DirichletBlock::new(rows).map(Block::Dirichlet)
    }

    pub fn symmetric(rows: usize, k: usize, c: f64) -> Result<Self> {
        Self::dirichlet(&vec![DirichletParams::symmetric(k, c)?; rows])
    }

    pub fn known(table: ConditionalTable) -> Self {
        Block::Known(Arc::new(table))
    }

    /// A Dirichlet block concentrated on a table: `scale * p + floor` per entry.
    pub fn concentrated(table: &ConditionalTable, scale: f64, floor: f64) -> Result<Self> {
        let rows: Vec<DirichletParams> = table
            .rows()
            .iter()
            .map(|r| DirichletParams::new(r.probs().iter().map(|p| scale * p + floor).collect()))
            .collect::<Result<_>>()?;
        Self::dirichlet(&rows)
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Block::Dirichlet(d) => d.n_rows(),
            Block::Known(t) => t.n_rows(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Block::Dirichlet(d) => d.k(),
            Block::Known(t) => t.n_targets(),
        }
    }

    /// Predictive probability of `target` in `row` given the observations
    /// recorded so far in this block.
    #[inline]
    pub fn predict(&self, row: usize, target: usize) -> f64 {
        match self {
            Block::Dirichlet(d) => d.predict(row, target),
            Block::Known(t) => t.prob(row, target),
        }
    }

    #[inline]
    pub fn observe(&mut self, row: usize, target: usize) {
        if let Block::Dirichlet(d) = self {
            d.observe(row, target);
        }
    }

    #[inline]
    pub fn unobserve(&mut self, row: usize, target: usize) {
        if let Block::Dirichlet(d) = self {
            d.unobserve(row, target);
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self, Block::Known(_))
    }

    /// Posterior mean of one row.
    pub fn mean_row(&self, row: usize) -> Categorical {
        match self {
            Block::Dirichlet(d) => d.row_params(row).mean(),
            Block::Known(t) => t.row(row).clone(),
        }
    }

    /// `E[log theta]` for one row; `ln theta` for a known row.
    pub fn expected_log_row(&self, row: usize) -> Vec<f64> {
        match self {
            Block::Dirichlet(d) => expected_log(&d.row_alpha(row)),
            Block::Known(t) => t.row(row).probs().iter().map(|p| p.ln()).collect(),
        }
    }

    /// Observation counts, or `None` for a known block.
    pub fn counts(&self) -> Option<&[u32]> {
        match self {
            Block::Dirichlet(d) => Some(d.counts()),
            Block::Known(_) => None,
        }
    }

    /// Folds recorded counts into the base, giving a count-free block with
    /// the same posterior.
    pub fn collapsed(&self) -> Self {
        match self {
            Block::Dirichlet(d) => Block::Dirichlet(d.posterior_as_base()),
            Block::Known(t) => Block::Known(t.clone()),
        }
    }

    /// Draws a point table from the block's posterior.
    pub fn sample_point(&self, rng: &mut impl Rng) -> ConditionalTable {
        match self {
            Block::Dirichlet(d) => ConditionalTable::new(
                (0..d.n_rows())
                    .map(|r| sample_dirichlet(&d.row_alpha(r), rng))
                    .collect(),
            )
            .expect("sampled rows share one size"),
            Block::Known(t) => (**t).clone(),
        }
    }

    /// Log probability of all recorded counts under the block's base.
    pub fn log_evidence(&self) -> f64 {
        match self {
            Block::Dirichlet(d) => d.log_evidence(),
            Block::Known(_) => 0.0,
        }
    }

    fn check_shape(&self, rows: usize, k: usize, name: &str) -> Result<()> {
        if self.n_rows() != rows || self.k() != k {
            return Err(Error::ShapeMismatch(format!(
                "{name} block is {}x{}, expected {rows}x{k}",
                self.n_rows(),
                self.k()
            )));
        }
        Ok(())
    }
}

/// The three parameter blocks of the model. Transition rows are indexed by
/// `action * n_env + env`; the initial block has a single row.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBelief {
    pub sensor: Block,
    pub transition: Block,
    pub initial: Block,
}

impl ParamBelief {
    pub fn new(spaces: &ModelSpaces, sensor: Block, transition: Block, initial: Block) -> Result<Self> {
        let b = Self {
            sensor,
            transition,
            initial,
        };
        b.check(spaces)?;
        Ok(b)
    }

    /// Every row `Dir(c, ..., c)`.
    pub fn symmetric(spaces: &ModelSpaces, c: f64) -> Result<Self> {
        Self::new(
            spaces,
            Block::symmetric(spaces.n_env, spaces.n_sensor, c)?,
            Block::symmetric(spaces.n_action * spaces.n_env, spaces.n_env, c)?,
            Block::symmetric(1, spaces.n_env, c)?,
        )
    }

    pub fn known(spaces: &ModelSpaces, theta: &ThetaPoint) -> Result<Self> {
        Self::new(
            spaces,
            Block::known(theta.sensor.clone()),
            Block::known(theta.transition.clone()),
            Block::known(ConditionalTable::new(vec![theta.initial.clone()])?),
        )
    }

    pub fn check(&self, spaces: &ModelSpaces) -> Result<()> {
        self.sensor.check_shape(spaces.n_env, spaces.n_sensor, "sensor")?;
        self.transition
            .check_shape(spaces.n_action * spaces.n_env, spaces.n_env, "transition")?;
        self.initial.check_shape(1, spaces.n_env, "initial")
    }

    pub fn block(&self, which: BlockKind) -> &Block {
        match which {
            BlockKind::Sensor => &self.sensor,
            BlockKind::Transition => &self.transition,
            BlockKind::Initial => &self.initial,
        }
    }

    pub fn collapsed(&self) -> Self {
        Self {
            sensor: self.sensor.collapsed(),
            transition: self.transition.collapsed(),
            initial: self.initial.collapsed(),
        }
    }

    pub fn log_evidence(&self) -> f64 {
        self.sensor.log_evidence() + self.transition.log_evidence() + self.initial.log_evidence()
    }

    /// Counts on the selected blocks, used to identify parameter posteriors.
    pub fn counts_key(&self, subset: BlockSet) -> Vec<u32> {
        let mut key = Vec::new();
        for (on, block) in [
            (subset.sensor, &self.sensor),
            (subset.transition, &self.transition),
            (subset.initial, &self.initial),
        ] {
            if on {
                if let Some(c) = block.counts() {
                    key.extend_from_slice(c);
                }
                key.push(u32::MAX);
            }
        }
        key
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Sensor,
    Transition,
    Initial,
}

/// A hyperprior: a weighted mixture of parameter beliefs. A plain Dirichlet
/// prior is a single component; a finite model class has one component per
/// member.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPrior {
    pub spaces: ModelSpaces,
    pub components: Vec<(f64, ParamBelief)>,
}

impl ModelPrior {
    pub fn single(spaces: ModelSpaces, belief: ParamBelief) -> Result<Self> {
        belief.check(&spaces)?;
        Ok(Self {
            spaces,
            components: vec![(1.0, belief)],
        })
    }

    pub fn mixture(spaces: ModelSpaces, weights: Categorical, beliefs: Vec<ParamBelief>) -> Result<Self> {
        if weights.len() != beliefs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} components",
                weights.len(),
                beliefs.len()
            )));
        }
        for b in &beliefs {
            b.check(&spaces)?;
        }
        Ok(Self {
            spaces,
            components: weights.probs().iter().copied().zip(beliefs).collect(),
        })
    }

    pub fn symmetric(spaces: ModelSpaces, c: f64) -> Result<Self> {
        Self::single(spaces, ParamBelief::symmetric(&spaces, c)?)
    }

    /// The single component, for methods that do not handle mixtures.
    pub fn as_single(&self) -> Result<&ParamBelief> {
        match self.components.as_slice() {
            [(_, b)] => Ok(b),
            _ => Err(Error::InvalidArgument(format!(
                "expected a single-component prior, got {} components",
                self.components.len()
            ))),
        }
    }
}

/// A point value of all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub sensor: ConditionalTable,
    pub transition: ConditionalTable,
    pub initial: Categorical,
}

impl ThetaPoint {
    pub fn from_environment(env: &EnvironmentSpec) -> Self {
        Self {
            sensor: env.sensor.clone(),
            transition: env.transition.clone(),
            initial: env.initial.clone(),
        }
    }

    pub fn check(&self, spaces: &ModelSpaces) -> Result<()> {
        let ok = self.sensor.n_rows() == spaces.n_env
            && self.sensor.n_targets() == spaces.n_sensor
            && self.transition.n_rows() == spaces.n_action * spaces.n_env
            && self.transition.n_targets() == spaces.n_env
            && self.initial.len() == spaces.n_env;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("parameter tables do not match model spaces".into()))
        }
    }
}

fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, size })
    }
}

/// `prod_r q(s_r | e_r) q(e_r | a_r, e_{r-1})` for a future segment under point
/// parameters.
pub fn predictive_factor(
    spaces: &ModelSpaces,
    theta: &ThetaPoint,
    sensors: &[usize],
    envs: &[usize],
    actions: &[usize],
    prev_env: usize,
) -> Result<f64> {
    theta.check(spaces)?;
    if sensors.len() != envs.len() || envs.len() != actions.len() {
        return Err(Error::ShapeMismatch(format!(
            "segments of lengths {}, {}, {}",
            sensors.len(),
            envs.len(),
            actions.len()
        )));
    }
    check_index("environment state", prev_env, spaces.n_env)?;
    let mut p = 1.0;
    let mut prev = prev_env;
    for ((&s, &e), &a) in sensors.iter().zip(envs).zip(actions) {
        check_index("sensor value", s, spaces.n_sensor)?;
        check_index("environment state", e, spaces.n_env)?;
        check_index("action", a, spaces.n_action)?;
        p *= theta.sensor.prob(e, s) * theta.transition.prob(spaces.transition_row(a, prev), e);
        prev = e;
    }
    Ok(p)
}

/// The discrete part of the model joint given point parameters:
/// `q(e_0) q(s_0|e_0) prod_{t>=1} q(a_t) q(e_t|a_t,e_{t-1}) q(s_t|e_t)`.
pub fn joint_model_prob(
    spaces: &ModelSpaces,
    theta: &ThetaPoint,
    sensors: &[usize],
    envs: &[usize],
    actions: &[usize],
    action_dists: &[Categorical],
) -> Result<f64> {
    theta.check(spaces)?;
    if sensors.is_empty()
        || sensors.len() != envs.len()
        || actions.len() + 1 != sensors.len()
        || action_dists.len() != actions.len()
    {
        return Err(Error::ShapeMismatch(format!(
            "joint over {} sensors, {} states, {} actions, {} action distributions",
            sensors.len(),
            envs.len(),
            actions.len(),
            action_dists.len()
        )));
    }
    check_index("environment state", envs[0], spaces.n_env)?;
    check_index("sensor value", sensors[0], spaces.n_sensor)?;
    let mut p = theta.initial.prob(envs[0]) * theta.sensor.prob(envs[0], sensors[0]);
    for (i, (&a, qa)) in actions.iter().zip(action_dists).enumerate() {
        check_index("action", a, qa.len())?;
        p *= qa.prob(a)
            * predictive_factor(spaces, theta, &sensors[i + 1..i + 2], &envs[i + 1..i + 2], &[a], envs[i])?;
    }
    Ok(p)
}

/// Desired distribution over sensor values, either the same at every future
/// step or given per step (the last entry repeats beyond the schedule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesiredPrior {
    Homogeneous(Categorical),
    Schedule(Vec<Categorical>),
}

impl DesiredPrior {
    /// Desired distribution at future offset `r` (0 is the current step).
    pub fn at(&self, r: usize) -> &Categorical {
        match self {
            DesiredPrior::Homogeneous(c) => c,
            DesiredPrior::Schedule(v) => &v[r.min(v.len() - 1)],
        }
    }

    /// A delta at `target` mixed with `smoothing` of uniform mass, so that KL
    /// terms stay finite for other outcomes.
    pub fn smoothed_delta(n: usize, target: usize, smoothing: f64) -> Result<Self> {
        if target >= n {
            return Err(Error::IndexOutOfRange {
                what: "desired sensor value",
                index: target,
                size: n,
            });
        }
        if !(0.0..1.0).contains(&smoothing) {
            return Err(Error::InvalidArgument(format!("smoothing {smoothing} not in [0, 1)")));
        }
        let probs = (0..n)
            .map(|i| smoothing / n as f64 + if i == target { 1.0 - smoothing } else { 0.0 })
            .collect();
        Ok(DesiredPrior::Homogeneous(Categorical::from_weights(probs)?))
    }

    pub fn n_sensor(&self) -> usize {
        self.at(0).len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_theta(n: usize) -> (ModelSpaces, ThetaPoint) {
        let spaces = ModelSpaces::new(n, n, n).unwrap();
        let theta = ThetaPoint {
            sensor: ConditionalTable::uniform(n, n),
            transition: ConditionalTable::uniform(n * n, n),
            initial: Categorical::uniform(n),
        };
        (spaces, theta)
    }

    #[test]
    fn predictive_factor_examples() {
        let (spaces, theta) = uniform_theta(2);
        assert_eq!(predictive_factor(&spaces, &theta, &[], &[], &[], 0).unwrap(), 1.0);
        let p = predictive_factor(&spaces, &theta, &[0, 1], &[1, 1], &[0, 1], 0).unwrap();
        assert!((p - 0.0625).abs() < 1e-15);

        let det = ThetaPoint {
            sensor: ConditionalTable::identity(2),
            transition: ConditionalTable::from_rows(vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ])
            .unwrap(),
            initial: Categorical::delta(2, 0),
        };
        let p = predictive_factor(&spaces, &det, &[1, 1], &[1, 1], &[1, 0], 0).unwrap();
        assert_eq!(p, 1.0);
        assert!(predictive_factor(&spaces, &det, &[2], &[1], &[1], 0).is_err());
    }

    #[test]
    fn predictive_factor_sums_to_one() {
        let spaces = ModelSpaces::new(2, 3, 2).unwrap();
        let theta = ThetaPoint {
            sensor: ConditionalTable::from_rows(vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]]).unwrap(),
            transition: ConditionalTable::from_rows(vec![
                vec![0.7, 0.3],
                vec![0.4, 0.6],
                vec![0.1, 0.9],
                vec![0.5, 0.5],
            ])
            .unwrap(),
            initial: Categorical::uniform(2),
        };
        let mut total = 0.0;
        for s0 in 0..3 {
            for s1 in 0..3 {
                for e0 in 0..2 {
                    for e1 in 0..2 {
                        total += predictive_factor(&spaces, &theta, &[s0, s1], &[e0, e1], &[1, 0], 1)
                            .unwrap();
                    }
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_model_examples() {
        let (spaces, theta) = uniform_theta(2);
        let qa = vec![Categorical::uniform(2)];
        let p = joint_model_prob(&spaces, &theta, &[0, 1], &[1, 0], &[1], &qa).unwrap();
        // q(e0) q(s0|e0) q(a1) q(e1|a1,e0) q(s1|e1): five factors of 1/2.
        assert!((p - 2f64.powi(-5)).abs() < 1e-15);

        let det = ThetaPoint {
            sensor: ConditionalTable::identity(2),
            transition: ConditionalTable::from_rows(vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
            ])
            .unwrap(),
            initial: Categorical::delta(2, 0),
        };
        let qa = vec![Categorical::new(vec![0.3, 0.7]).unwrap()];
        let p = joint_model_prob(&spaces, &det, &[0, 0], &[0, 0], &[1], &qa).unwrap();
        assert!((p - 0.7).abs() < 1e-15);
        let p = joint_model_prob(&spaces, &det, &[0, 1], &[0, 0], &[1], &qa).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn horizon_rules() {
        assert_eq!(HorizonRule::Fixed(10).horizon_for(3), 10);
        assert_eq!(HorizonRule::Sliding(2).horizon_for(3), 5);
        assert_eq!(HorizonRule::Sliding(0).horizon_for(7), 7);
        assert_eq!(HorizonRule::Sliding(2).future_len(3), 3);
        assert_eq!(HorizonRule::Fixed(4).future_len(6), 0);
    }

    #[test]
    fn smoothed_delta_is_valid() {
        let d = DesiredPrior::smoothed_delta(4, 3, 1e-6).unwrap();
        let c = d.at(5);
        assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(c.prob(0) > 0.0 && c.prob(3) > 0.999);
    }
}
