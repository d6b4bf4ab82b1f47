//! Intrinsic motivations and the action-value functions they induce.
//!
//! Every motivation maps a posterior view and a future action sequence to a
//! real value. Information gain about continuous parameters is evaluated on a
//! discrete atom set: either the view's components grouped by prior component
//! and parameter counts, or a seeded sample of parameter points.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Block, BlockSet, DesiredPrior};
use crate::prob::{kl_slices, logsumexp, mi_slice, Categorical};
use crate::select::ValueTable;
use crate::view::{path_digits, JointPredictive, PosteriorView, ViewComponent};

/// What the parameter uncertainty is discretized into for information gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ThetaAtoms {
    /// The view's components, grouped by prior component and counts.
    #[default]
    Components,
    /// `count` parameter points drawn per component from its Dirichlet factors.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoGainSettings {
    pub subset: BlockSet,
    pub atoms: ThetaAtoms,
}

impl Default for InfoGainSettings {
    fn default() -> Self {
        Self {
            subset: BlockSet::ALL,
            atoms: ThetaAtoms::Components,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FepSettings {
    pub desired: Option<DesiredPrior>,
    pub info_gain: Option<InfoGainSettings>,
    /// Sum per-step terms instead of scoring whole sequences.
    pub time_summed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Motivation {
    Fep(FepSettings),
    /// Time-summed free energy with a desired prior and no information gain.
    FepFriston2015 { desired: DesiredPrior },
    /// Channel capacity from `m` actions after the evaluated `n + 1` to the final sensor value.
    Empowerment { n: usize, m: usize },
    PredictiveInfo,
    Ksa { atoms: ThetaAtoms },
    ExtrinsicOnly { desired: DesiredPrior, time_summed: bool },
    Constant(f64),
    WeightedSum(Vec<(f64, Motivation)>),
}

impl Motivation {
    pub const KINDS: [&'static str; 8] = [
        "fep",
        "fep_friston2015",
        "empowerment",
        "predictive_info",
        "ksa",
        "extrinsic_only",
        "constant",
        "weighted_sum",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Motivation::Fep(_) => "fep",
            Motivation::FepFriston2015 { .. } => "fep_friston2015",
            Motivation::Empowerment { .. } => "empowerment",
            Motivation::PredictiveInfo => "predictive_info",
            Motivation::Ksa { .. } => "ksa",
            Motivation::ExtrinsicOnly { .. } => "extrinsic_only",
            Motivation::Constant(_) => "constant",
            Motivation::WeightedSum(_) => "weighted_sum",
        }
    }

    /// Whether evaluation needs the parameter posterior itself rather than
    /// only future predictives.
    pub fn uses_parameter_posterior(&self) -> bool {
        match self {
            Motivation::Ksa { .. } => true,
            Motivation::Fep(f) => f.info_gain.is_some(),
            Motivation::WeightedSum(terms) => terms.iter().any(|(_, m)| m.uses_parameter_posterior()),
            _ => false,
        }
    }

    /// Length of the evaluated action sequence given the model's future length.
    pub fn action_len(&self, horizon_len: usize) -> Result<usize> {
        match self {
            Motivation::Empowerment { n, m } => {
                if *m == 0 {
                    return Err(Error::InvalidArgument("empowerment needs m >= 1".into()));
                }
                Ok(n + 1)
            }
            Motivation::WeightedSum(terms) => {
                let lens: Vec<usize> = terms
                    .iter()
                    .map(|(_, m)| m.action_len(horizon_len))
                    .collect::<Result<_>>()?;
                match lens.split_first() {
                    None => Err(Error::InvalidArgument("weighted sum with no terms".into())),
                    Some((first, rest)) if rest.iter().all(|l| l == first) => Ok(*first),
                    Some(_) => Err(Error::InvalidArgument(format!(
                        "weighted-sum terms evaluate sequences of different lengths {lens:?}"
                    ))),
                }
            }
            _ if horizon_len == 0 => Err(Error::HorizonTooShort {
                len: 0,
                reason: "no future steps to evaluate",
            }),
            _ => Ok(horizon_len),
        }
    }
}

/// Per-sequence evaluation state; predictives are computed once and shared
/// across the terms of a weighted sum.
struct SeqEval<'a> {
    view: &'a PosteriorView,
    actions: &'a [usize],
    parts: Option<Vec<JointPredictive>>,
    joint: Option<JointPredictive>,
}

impl<'a> SeqEval<'a> {
    fn new(view: &'a PosteriorView, actions: &'a [usize]) -> Self {
        Self {
            view,
            actions,
            parts: None,
            joint: None,
        }
    }

    fn parts(&mut self) -> Result<&[JointPredictive]> {
        if self.parts.is_none() {
            self.parts = Some(self.view.component_joints(self.actions)?);
        }
        Ok(self.parts.as_deref().expect("just filled"))
    }

    fn joint(&mut self) -> Result<&JointPredictive> {
        if self.joint.is_none() {
            self.parts()?;
            let j = self.view.mix(self.parts.as_deref().expect("just filled"));
            self.joint = Some(j);
        }
        Ok(self.joint.as_ref().expect("just filled"))
    }

    fn value(&mut self, cfg: &Motivation) -> Result<f64> {
        match cfg {
            Motivation::Fep(f) => self.fep(f),
            Motivation::FepFriston2015 { desired } => self.fep(&FepSettings {
                desired: Some(desired.clone()),
                info_gain: None,
                time_summed: true,
            }),
            Motivation::Empowerment { m, .. } => empowerment_value(self.view, self.actions, *m),
            Motivation::PredictiveInfo => predictive_information_from(self.joint()?),
            Motivation::Ksa { atoms } => self.info_gain(&InfoGainSettings {
                subset: BlockSet::ALL,
                atoms: *atoms,
            }),
            Motivation::ExtrinsicOnly { desired, time_summed } => {
                Ok(-extrinsic_kl_from(self.joint()?, desired, *time_summed)?)
            }
            Motivation::Constant(c) => Ok(*c),
            Motivation::WeightedSum(terms) => {
                let mut acc = 0.0;
                for (w, m) in terms {
                    acc += w * self.value(m)?;
                }
                Ok(acc)
            }
        }
    }

    fn fep(&mut self, f: &FepSettings) -> Result<f64> {
        let joint = self.joint()?;
        let mut v = if f.time_summed {
            joint.neg_conditional_entropy_per_step()
        } else {
            joint.neg_conditional_entropy()
        };
        if let Some(d) = &f.desired {
            v -= extrinsic_kl_from(joint, d, f.time_summed)?;
        }
        if let Some(ig) = &f.info_gain {
            v += self.info_gain(ig)?;
        }
        Ok(v)
    }

    fn info_gain(&mut self, s: &InfoGainSettings) -> Result<f64> {
        match s.atoms {
            ThetaAtoms::Components => {
                let mut atoms: IndexMap<(usize, Vec<u32>), (f64, Vec<f64>)> = IndexMap::new();
                let comps = &self.view.components;
                let parts = self.parts()?;
                for (c, part) in comps.iter().zip(parts) {
                    let key = (c.group, c.belief.counts_key(s.subset));
                    let sm = part.sensor_marginal();
                    let slot = atoms.entry(key).or_insert_with(|| (0.0, vec![0.0; sm.len()]));
                    slot.0 += c.weight;
                    for (o, p) in slot.1.iter_mut().zip(&sm) {
                        *o += c.weight * p;
                    }
                }
                Ok(mixture_information(atoms.into_values().collect()))
            }
            ThetaAtoms::Sampled { count, seed } => {
                if count == 0 {
                    return Err(Error::InvalidArgument("sampled atoms need count >= 1".into()));
                }
                let atom_view = sampled_atoms(self.view, s.subset, count, seed)?;
                let parts = atom_view.component_joints(self.actions)?;
                let atoms = atom_view
                    .components
                    .iter()
                    .zip(&parts)
                    .map(|(c, p)| {
                        let sm = p.sensor_marginal().into_iter().map(|x| x * c.weight).collect();
                        (c.weight, sm)
                    })
                    .collect();
                Ok(mixture_information(atoms))
            }
        }
    }
}

/// `sum_k W_k KL(d(s|k) || d(s))` from unnormalized per-atom sensor masses.
fn mixture_information(atoms: Vec<(f64, Vec<f64>)>) -> f64 {
    if atoms.len() < 2 {
        return 0.0;
    }
    let n = atoms[0].1.len();
    let mut total = vec![0.0; n];
    for (_, m) in &atoms {
        for (o, p) in total.iter_mut().zip(m) {
            *o += p;
        }
    }
    let mut acc = 0.0;
    for (w, m) in &atoms {
        if *w <= 0.0 {
            continue;
        }
        for (p, q) in m.iter().zip(&total) {
            if *p > 0.0 {
                acc += p * ((p / w) / q).ln();
            }
        }
    }
    acc.max(0.0)
}

/// Replaces the selected Dirichlet blocks by `count` seeded draws per component.
fn sampled_atoms(view: &PosteriorView, subset: BlockSet, count: usize, seed: u64) -> Result<PosteriorView> {
    let mut comps = Vec::with_capacity(view.components.len() * count);
    for (i, c) in view.components.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for _ in 0..count {
            let mut b = c.belief.clone();
            for (on, block) in [
                (subset.sensor, &mut b.sensor),
                (subset.transition, &mut b.transition),
                (subset.initial, &mut b.initial),
            ] {
                if on && !block.is_known() {
                    *block = Block::known(block.sample_point(&mut rng));
                }
            }
            comps.push(ViewComponent {
                weight: c.weight / count as f64,
                start: c.start.clone(),
                belief: b,
                group: comps.len(),
            });
        }
    }
    Ok(PosteriorView::new(view.spaces, comps)?
        .with_cap(view.cap)
        .with_exec(view.exec))
}

fn extrinsic_kl_from(joint: &JointPredictive, desired: &DesiredPrior, time_summed: bool) -> Result<f64> {
    if desired.n_sensor() != joint.n_sensor {
        return Err(Error::ShapeMismatch(format!(
            "desired prior over {} sensor values, model has {}",
            desired.n_sensor(),
            joint.n_sensor
        )));
    }
    if time_summed {
        let mut acc = 0.0;
        for r in 0..joint.len {
            acc += kl_slices(&joint.step_sensor(r), desired.at(r).probs())?;
        }
        return Ok(acc);
    }
    let p = joint.sensor_marginal();
    let q: Vec<f64> = (0..p.len())
        .map(|idx| {
            path_digits(idx, joint.n_sensor, joint.len)
                .iter()
                .enumerate()
                .map(|(r, &s)| desired.at(r).prob(s))
                .product()
        })
        .collect();
    kl_slices(&p, &q)
}

fn predictive_information_from(joint: &JointPredictive) -> Result<f64> {
    let k = joint.len / 2;
    if k == 0 {
        return Err(Error::HorizonTooShort {
            len: joint.len,
            reason: "predictive information needs at least two future steps",
        });
    }
    let ns = joint.n_sensor;
    let block = ns.pow(k as u32);
    let tail = ns.pow((joint.len - 2 * k) as u32);
    let mut table = vec![0.0; block * block];
    for (idx, p) in joint.sensor_marginal().into_iter().enumerate() {
        table[idx / tail] += p;
    }
    Ok(mi_slice(&table, block, block))
}

/// `-H(S_{t:T} | E_{t:T}, a)`, whole-sequence or summed per step.
pub fn fep_entropy_term(view: &PosteriorView, actions: &[usize], time_summed: bool) -> Result<f64> {
    let j = view.joint(actions)?;
    Ok(if time_summed {
        j.neg_conditional_entropy_per_step()
    } else {
        j.neg_conditional_entropy()
    })
}

/// `KL(d(S_{t:T} | a) || p^d)`, against the product of per-step desired
/// distributions or summed per step.
pub fn extrinsic_kl_term(view: &PosteriorView, actions: &[usize], desired: &DesiredPrior, time_summed: bool) -> Result<f64> {
    extrinsic_kl_from(&view.joint(actions)?, desired, time_summed)
}

/// Mutual information between the future sensor sequence and the parameter atoms.
pub fn info_gain(view: &PosteriorView, actions: &[usize], settings: &InfoGainSettings) -> Result<f64> {
    SeqEval::new(view, actions).info_gain(settings)
}

/// Information gain about all parameters.
pub fn ksa_value(view: &PosteriorView, actions: &[usize], atoms: ThetaAtoms) -> Result<f64> {
    info_gain(
        view,
        actions,
        &InfoGainSettings {
            subset: BlockSet::ALL,
            atoms,
        },
    )
}

/// Entropy term plus optional information gain minus optional extrinsic KL.
pub fn fep_value(view: &PosteriorView, actions: &[usize], settings: &FepSettings) -> Result<f64> {
    SeqEval::new(view, actions).fep(settings)
}

pub fn predictive_information_value(view: &PosteriorView, actions: &[usize]) -> Result<f64> {
    if actions.len() < 2 {
        return Err(Error::HorizonTooShort {
            len: actions.len(),
            reason: "predictive information needs at least two future steps",
        });
    }
    predictive_information_from(&view.joint(actions)?)
}

/// Expected free energy in matrix form.
///
/// `a[s][e]` is the sensor matrix (columns are distributions), `b[action][e2][e]`
/// the transition matrices, `c` the desired distributions per step and
/// `start` the state distribution before the first action.
pub fn friston2015_value(
    a: &[Vec<f64>],
    b: &[Vec<Vec<f64>>],
    c: &DesiredPrior,
    start: &Categorical,
    actions: &[usize],
) -> Result<f64> {
    let ne = start.len();
    let ns = a.len();
    let stochastic_columns = |m: &[Vec<f64>], rows: usize, name: &str| -> Result<()> {
        if m.len() != rows || m.iter().any(|r| r.len() != ne) {
            return Err(Error::ShapeMismatch(format!("{name} matrix is not {rows}x{ne}")));
        }
        for e in 0..ne {
            let col: f64 = m.iter().map(|r| r[e]).sum();
            if (col - 1.0).abs() > 1e-9 || m.iter().any(|r| !(r[e] >= 0.0)) {
                return Err(Error::ShapeMismatch(format!("{name} column {e} is not a distribution")));
            }
        }
        Ok(())
    };
    stochastic_columns(a, ns, "sensor")?;
    for bm in b {
        stochastic_columns(bm, ne, "transition")?;
    }
    if c.n_sensor() != ns {
        return Err(Error::ShapeMismatch("desired prior does not match the sensor matrix".into()));
    }
    // 1 . (A x log A), the per-state negative emission entropy.
    let neg_h: Vec<f64> = (0..ne)
        .map(|e| a.iter().map(|row| crate::prob::xlogx(row[e])).sum())
        .collect();
    let mut s_bar = start.probs().to_vec();
    let mut total = 0.0;
    for (r, &act) in actions.iter().enumerate() {
        let bm = b.get(act).ok_or(Error::IndexOutOfRange {
            what: "action",
            index: act,
            size: b.len(),
        })?;
        s_bar = (0..ne).map(|i| (0..ne).map(|j| bm[i][j] * s_bar[j]).sum()).collect();
        let o: Vec<f64> = (0..ns).map(|s| (0..ne).map(|e| a[s][e] * s_bar[e]).sum()).collect();
        total += neg_h.iter().zip(&s_bar).map(|(h, p)| h * p).sum::<f64>();
        total -= kl_slices(&o, c.at(r).probs())?;
    }
    Ok(total)
}

/// Result of a capacity computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    pub value: f64,
    pub upper: f64,
    pub iterations: usize,
    pub input: Vec<f64>,
}

pub const BA_TOL: f64 = 1e-9;
pub const BA_MAX_ITER: usize = 1000;

/// Per-input divergences `D(p(.|x) || q)` and the mutual information of the
/// input distribution `exp(log_r)`.
fn input_divergences(channel: &[Vec<f64>], log_r: &[f64]) -> (Vec<f64>, f64) {
    let ny = channel[0].len();
    let r: Vec<f64> = log_r.iter().map(|l| l.exp()).collect();
    let q: Vec<f64> = (0..ny).map(|y| r.iter().zip(channel).map(|(rx, row)| rx * row[y]).sum()).collect();
    let d: Vec<f64> = channel
        .iter()
        .map(|row| {
            row.iter()
                .zip(&q)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, qy)| if *qy > 0.0 { p * (p / qy).ln() } else { f64::INFINITY })
                .sum()
        })
        .collect();
    let mi = r.iter().zip(&d).filter(|(rx, _)| **rx > 0.0).map(|(rx, dx)| rx * dx).sum();
    (d, mi)
}

/// `log r + step * d`, renormalized, with entries floored so they stay finite.
fn tilt(log_r: &[f64], d: &[f64], step: f64) -> Vec<f64> {
    let raw: Vec<f64> = log_r.iter().zip(d).map(|(l, dx)| l + step * dx).collect();
    let norm = logsumexp(&raw);
    raw.iter().map(|x| (x - norm).max(LOG_FLOOR)).collect()
}

const LOG_FLOOR: f64 = -700.0;
const MAX_STEP: f64 = 1e12;

/// Blahut–Arimoto capacity of a channel given as rows `p(y | x)`. Starts from
/// the uniform input and stops when the gap between the lower bound `I(r)`
/// and the upper bound `max_x D(p(.|x) || q)` is below `tol`.
///
/// The update is the multiplicative Blahut–Arimoto step `r ~ r exp(D)` with an
/// adaptive exponent: it grows while the mutual information keeps rising and
/// falls back towards the plain step (exponent 1) otherwise. Near-degenerate
/// channels, where the plain step barely moves, converge in a few dozen
/// iterations instead of thousands.
pub fn blahut_arimoto(channel: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Capacity> {
    let nx = channel.len();
    let ny = channel.first().map(|r| r.len()).unwrap_or(0);
    if nx == 0 || ny == 0 || channel.iter().any(|r| r.len() != ny) {
        return Err(Error::ShapeMismatch("channel must be a non-empty rectangular table".into()));
    }
    let mut log_r = vec![-(nx as f64).ln(); nx];
    let (mut d, mut mi) = input_divergences(channel, &log_r);
    let mut step: f64 = 1.0;
    for it in 1..=max_iter {
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if upper - mi < tol {
            return Ok(Capacity {
                value: mi.max(0.0),
                upper,
                iterations: it,
                input: log_r.iter().map(|l| l.exp()).collect(),
            });
        }
        let mut trial = (step * 2.0).min(MAX_STEP);
        let next = loop {
            let cand = tilt(&log_r, &d, trial);
            let (cd, cmi) = input_divergences(channel, &cand);
            if cmi > mi || trial <= 1.0 {
                break (cand, cd, cmi, trial);
            }
            trial = (trial / 2.0).max(1.0);
        };
        (log_r, d, mi, step) = next;
    }
    let r: Vec<f64> = log_r.iter().map(|l| l.exp()).collect();
    match barrier_capacity(channel, r, tol) {
        Some((input, value, upper, steps)) => Ok(Capacity {
            value: value.max(0.0),
            upper,
            iterations: max_iter + steps,
            input,
        }),
        None => Err(Error::CapacityNonConvergence {
            bound: mi,
            iterations: max_iter,
        }),
    }
}

/// Interior-point fallback for channels where the multiplicative updates
/// stall, typically because a non-optimal input has a row almost equal to an
/// optimal one. Maximizes `t I(r) + sum ln r` by damped Newton steps in the
/// scaled variables `dr / r` while `t` grows, and returns only once the same
/// certified bound gap is below `tol`.
fn barrier_capacity(channel: &[Vec<f64>], start: Vec<f64>, tol: f64) -> Option<(Vec<f64>, f64, f64, usize)> {
    let nx = channel.len();
    let ny = channel[0].len();
    let floor = 1e-3 / nx as f64;
    let mut r: Vec<f64> = start.iter().map(|x| x.max(floor)).collect();
    let total: f64 = r.iter().sum();
    r.iter_mut().for_each(|x| *x /= total);
    let log_of = |r: &[f64]| r.iter().map(|x| x.ln()).collect::<Vec<f64>>();
    let barrier = |t: f64, r: &[f64]| {
        let (_, mi) = input_divergences(channel, &log_of(r));
        t * mi + r.iter().map(|x| x.ln()).sum::<f64>()
    };
    let mut steps = 0;
    let mut t = 1.0;
    while t < 1e16 {
        for _ in 0..100 {
            steps += 1;
            let (d, _) = input_divergences(channel, &log_of(&r));
            let q: Vec<f64> = (0..ny).map(|y| r.iter().zip(channel).map(|(rx, row)| rx * row[y]).sum()).collect();
            // Scaled system: A = t R P diag(1/q) P^T R + I, g = R (t D + 1/r).
            let a = DMatrix::from_fn(nx, nx, |i, j| {
                let cross: f64 = (0..ny)
                    .filter(|&y| q[y] > 0.0)
                    .map(|y| channel[i][y] * channel[j][y] / q[y])
                    .sum();
                t * r[i] * r[j] * cross + if i == j { 1.0 } else { 0.0 }
            });
            let g = DVector::from_fn(nx, |i, _| r[i] * t * d[i] + 1.0);
            let w = DVector::from_iterator(nx, r.iter().copied());
            let chol = a.cholesky()?;
            let ag = chol.solve(&g);
            let aw = chol.solve(&w);
            let nu = -w.dot(&ag) / w.dot(&aw);
            let u = ag + aw * nu;
            let decrement = u.dot(&g);
            if !(decrement > 1e-14) {
                break;
            }
            let mut s = 1.0;
            while u.iter().any(|ui| 1.0 + s * ui <= 0.0) {
                s *= 0.5;
            }
            let f0 = barrier(t, &r);
            let next = loop {
                let cand: Vec<f64> = r.iter().zip(u.iter()).map(|(x, ui)| x * (1.0 + s * ui)).collect();
                if barrier(t, &cand) >= f0 + 0.25 * s * decrement || s < 1e-12 {
                    break cand;
                }
                s *= 0.5;
            };
            let total: f64 = next.iter().sum();
            r = next.into_iter().map(|x| x / total).collect();
        }
        let (d, mi) = input_divergences(channel, &log_of(&r));
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if upper - mi < tol {
            return Some((r, mi, upper, steps));
        }
        t *= 10.0;
    }
    None
}

/// Channel from `m` suffix actions to the final sensor value, after the prefix.
pub fn empowerment_channel(view: &PosteriorView, prefix: &[usize], m: usize) -> Result<Vec<Vec<f64>>> {
    let na = view.spaces.n_action;
    let n_suffix = (na as f64).powi(m as i32);
    if n_suffix > view.cap as f64 {
        return Err(Error::complexity("empowerment suffixes", n_suffix, view.cap));
    }
    let len = prefix.len() + m;
    (0..n_suffix as usize)
        .map(|idx| {
            let mut seq = prefix.to_vec();
            seq.extend(path_digits(idx, na, m));
            Ok(view.joint(&seq)?.step_sensor(len - 1))
        })
        .collect()
}

/// Capacity of the channel from the `m` actions after `prefix` to the final
/// sensor value.
pub fn empowerment_value(view: &PosteriorView, prefix: &[usize], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("empowerment needs m >= 1".into()));
    }
    let channel = empowerment_channel(view, prefix, m)?;
    blahut_arimoto(&channel, BA_TOL, BA_MAX_ITER).map(|c| c.value)
}

/// A motivation bound to a view: the action-value function.
#[derive(Debug, Clone, Copy)]
pub struct ActionValueFn<'a> {
    pub view: &'a PosteriorView,
    pub cfg: &'a Motivation,
}

pub fn make_action_value<'a>(view: &'a PosteriorView, cfg: &'a Motivation) -> ActionValueFn<'a> {
    ActionValueFn { view, cfg }
}

impl ActionValueFn<'_> {
    pub fn value(&self, actions: &[usize]) -> Result<f64> {
        SeqEval::new(self.view, actions).value(self.cfg)
    }

    /// Values of every action sequence of the motivation's length, in
    /// lexicographic order.
    pub fn table(&self, horizon_len: usize, cap: usize) -> Result<ValueTable> {
        let len = self.cfg.action_len(horizon_len)?;
        ValueTable::build(self.view.spaces.n_action, len, cap, self.view.exec, |seq| self.value(seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpaces, ParamBelief};
    use crate::prob::ConditionalTable;

    fn known_view(sensor: ConditionalTable, transition: ConditionalTable, start: Categorical) -> PosteriorView {
        let ne = start.len();
        let sp = ModelSpaces::new(ne, sensor.n_targets(), transition.n_rows() / ne).unwrap();
        let b = ParamBelief::new(
            &sp,
            Block::known(sensor),
            Block::known(transition),
            Block::known(ConditionalTable::new(vec![Categorical::uniform(ne)]).unwrap()),
        )
        .unwrap();
        PosteriorView::single(sp, start, b).unwrap()
    }

    fn noisy_sensor(flip: f64) -> ConditionalTable {
        ConditionalTable::from_rows(vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]]).unwrap()
    }

    #[test]
    fn entropy_term_examples() {
        let stay = ConditionalTable::identity(2);
        let v = known_view(ConditionalTable::identity(2), stay.clone(), Categorical::delta(2, 0));
        assert_eq!(fep_entropy_term(&v, &[0], false).unwrap(), 0.0);
        let v = known_view(noisy_sensor(0.5), stay.clone(), Categorical::delta(2, 0));
        assert!((fep_entropy_term(&v, &[0], false).unwrap() + 2f64.ln()).abs() < 1e-12);
        let v = known_view(noisy_sensor(0.1), stay, Categorical::delta(2, 0));
        assert!((fep_entropy_term(&v, &[0], false).unwrap() + 0.325083).abs() < 1e-6);
    }

    #[test]
    fn extrinsic_examples() {
        let v = known_view(ConditionalTable::identity(2), ConditionalTable::identity(2), Categorical::delta(2, 0));
        let uni = DesiredPrior::Homogeneous(Categorical::uniform(2));
        assert!((extrinsic_kl_term(&v, &[0], &uni, false).unwrap() - 2f64.ln()).abs() < 1e-12);
        let same = DesiredPrior::Homogeneous(Categorical::delta(2, 0));
        assert_eq!(extrinsic_kl_term(&v, &[0], &same, false).unwrap(), 0.0);
        let miss = DesiredPrior::Homogeneous(Categorical::delta(2, 1));
        assert!(matches!(
            extrinsic_kl_term(&v, &[0], &miss, false),
            Err(Error::AbsoluteContinuityViolation { .. })
        ));
    }

    #[test]
    fn capacity_examples() {
        let id3 = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!((blahut_arimoto(&id3, BA_TOL, BA_MAX_ITER).unwrap().value - 3f64.ln()).abs() < 1e-9);
        let constant = vec![vec![0.3, 0.7]; 2];
        assert!(blahut_arimoto(&constant, BA_TOL, BA_MAX_ITER).unwrap().value.abs() < 1e-12);
        let bsc = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        assert!((blahut_arimoto(&bsc, BA_TOL, BA_MAX_ITER).unwrap().value - 0.368064).abs() < 1e-6);
    }

    #[test]
    fn capacity_non_convergence_is_reported() {
        let z = vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.3, 0.7]];
        assert!(matches!(
            blahut_arimoto(&z, f64::MIN_POSITIVE, 2),
            Err(Error::CapacityNonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn friston_hand_example() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let swap = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let b = vec![a.clone(), swap];
        let c = DesiredPrior::Homogeneous(Categorical::uniform(2));
        let v = friston2015_value(&a, &b, &c, &Categorical::delta(2, 0), &[1]).unwrap();
        assert!((v + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn action_lengths() {
        assert_eq!(Motivation::Empowerment { n: 1, m: 2 }.action_len(5).unwrap(), 2);
        assert_eq!(Motivation::PredictiveInfo.action_len(4).unwrap(), 4);
        let mixed = Motivation::WeightedSum(vec![
            (1.0, Motivation::Empowerment { n: 0, m: 1 }),
            (1.0, Motivation::Constant(0.0)),
        ]);
        assert!(mixed.action_len(3).is_err());
    }
}
