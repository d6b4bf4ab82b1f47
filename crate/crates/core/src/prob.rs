//! Finite distributions and the Dirichlet machinery used everywhere else.
//!
//! All logarithms are natural. `0 * log 0` is taken as `0`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Construction tolerance on the total mass of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability vector over `0..len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Validates a probability vector. Inputs whose mass is within
    /// [`NORMALIZATION_TOL`] of one are renormalized, anything else is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total = check_weights(&probs)?;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Ok(Self::rescale(probs, total))
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total = check_weights(&weights)?;
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(Self::rescale(weights, total))
    }

    /// Normalizes log-weights with a max shift. Entries of `-inf` get zero mass.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "log-weights have maximum {m}"
            )));
        }
        Self::from_weights(log_weights.iter().map(|&l| (l - m).exp()).collect())
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty set");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn delta(n: usize, at: usize) -> Self {
        assert!(at < n, "delta index {at} outside 0..{n}");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    fn rescale(mut probs: Vec<f64>, total: f64) -> Self {
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn argmax(&self) -> usize {
        argmax_first(&self.probs)
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Categorical::new(v)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.probs
    }
}

fn check_weights(w: &[f64]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::InvalidDistribution("empty index set".into()));
    }
    if let Some((i, x)) = w.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "entry {i} is {x}, expected a finite nonnegative value"
        )));
    }
    Ok(w.iter().sum())
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// A stochastic table: every row is a distribution over the same target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Categorical>", into = "Vec<Categorical>")]
pub struct ConditionalTable {
    rows: Vec<Categorical>,
}

impl ConditionalTable {
    pub fn new(rows: Vec<Categorical>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::ShapeMismatch("table has no rows".into()));
        };
        let k = first.len();
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(format!(
                "row {i} has {} entries, row 0 has {k}",
                rows[i].len()
            )));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(Categorical::new)
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n).map(|i| Categorical::delta(n, i)).collect(),
        }
    }

    pub fn uniform(rows: usize, k: usize) -> Self {
        Self {
            rows: vec![Categorical::uniform(k); rows],
        }
    }

    pub fn row(&self, i: usize) -> &Categorical {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Categorical] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_targets(&self) -> usize {
        self.rows[0].len()
    }

    pub fn prob(&self, row: usize, target: usize) -> f64 {
        self.rows[row].prob(target)
    }
}

impl TryFrom<Vec<Categorical>> for ConditionalTable {
    type Error = Error;
    fn try_from(rows: Vec<Categorical>) -> Result<Self> {
        ConditionalTable::new(rows)
    }
}

impl From<ConditionalTable> for Vec<Categorical> {
    fn from(t: ConditionalTable) -> Self {
        t.rows
    }
}

/// Concentration parameters of a single Dirichlet distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidDistribution("empty Dirichlet".into()));
        }
        if let Some((i, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a > 0.0))
        {
            return Err(Error::InvalidDistribution(format!(
                "concentration {i} is {a}, expected a finite positive value"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn symmetric(k: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; k])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Posterior mean, `alpha / sum(alpha)`.
    pub fn mean(&self) -> Categorical {
        let total = self.total();
        Categorical {
            probs: self.alpha.iter().map(|a| a / total).collect(),
        }
    }

    /// `E[log theta_k] = digamma(alpha_k) - digamma(sum alpha)`.
    pub fn expected_log_prob(&self) -> Vec<f64> {
        expected_log(&self.alpha)
    }

    /// Log of the Dirichlet-multinomial probability of an observation
    /// sequence with the given category counts.
    pub fn log_polya(&self, counts: &[u32]) -> f64 {
        log_polya(&self.alpha, counts)
    }

    /// Dirichlet-multinomial probability of an observation sequence with the
    /// given category counts (order-specific, not the multinomial coefficient
    /// weighted version).
    pub fn polya_predictive(&self, counts: &[u32]) -> f64 {
        self.log_polya(counts).exp()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Categorical {
        sample_dirichlet(&self.alpha, rng)
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        DirichletParams::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(d: DirichletParams) -> Self {
        d.alpha
    }
}

pub(crate) fn expected_log(alpha: &[f64]) -> Vec<f64> {
    let total = digamma(alpha.iter().sum());
    alpha.iter().map(|&a| digamma(a) - total).collect()
}

/// Sequential form: `prod_k prod_{j < c_k} (alpha_k + j) / prod_{i < N} (A + i)`.
pub(crate) fn log_polya(alpha: &[f64], counts: &[u32]) -> f64 {
    debug_assert_eq!(alpha.len(), counts.len());
    let mut num = 0.0;
    let mut n = 0u32;
    for (&a, &c) in alpha.iter().zip(counts) {
        for j in 0..c {
            num += (a + j as f64).ln();
        }
        n += c;
    }
    let total: f64 = alpha.iter().sum();
    let den: f64 = (0..n).map(|i| (total + i as f64).ln()).sum();
    num - den
}

pub(crate) fn sample_dirichlet(alpha: &[f64], rng: &mut impl Rng) -> Categorical {
    use rand_distr::{Distribution, Gamma};
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    match Categorical::from_weights(draws) {
        Ok(c) => c,
        // All draws underflowed (only possible for tiny concentrations):
        // fall back to the mean's mode, which is where the mass sits.
        Err(_) => Categorical::delta(alpha.len(), argmax_first(alpha)),
    }
}

pub fn entropy(p: &Categorical) -> f64 {
    -p.probs.iter().map(|&x| xlogx(x)).sum::<f64>()
}

/// `KL(p || q)`, refusing when `q` misses mass that `p` has.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "KL between sizes {} and {}",
            p.len(),
            q.len()
        )));
    }
    kl_slices(&p.probs, &q.probs)
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::AbsoluteContinuityViolation { index: i, p: pi });
            }
            acc += pi * (pi / qi).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// Mutual information of a joint distribution laid out row-major as
/// `joint[x * ny + y]`.
pub fn mutual_information(joint: &Categorical, nx: usize, ny: usize) -> Result<f64> {
    if nx * ny != joint.len() {
        return Err(Error::ShapeMismatch(format!(
            "joint of size {} is not {nx} x {ny}",
            joint.len()
        )));
    }
    Ok(mi_slice(&joint.probs, nx, ny))
}

pub(crate) fn mi_slice(joint: &[f64], nx: usize, ny: usize) -> f64 {
    let mut px = vec![0.0; nx];
    let mut py = vec![0.0; ny];
    for x in 0..nx {
        for y in 0..ny {
            let p = joint[x * ny + y];
            px[x] += p;
            py[y] += p;
        }
    }
    let mut acc = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let p = joint[x * ny + y];
            if p > 0.0 {
                acc += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    acc.max(0.0)
}

pub fn sample_categorical(p: &Categorical, rng: &mut impl Rng) -> usize {
    sample_index(&p.probs, rng)
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Digamma function. Asymptotic series for `x >= 6`, recurrence below.
pub fn digamma(mut x: f64) -> f64 {
    assert!(x > 0.0, "digamma is only needed for positive arguments");
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (-1.0 / 12.0
            + inv2
                * (1.0 / 120.0
                    + inv2
                        * (-1.0 / 252.0
                            + inv2
                                * (1.0 / 240.0
                                    + inv2
                                        * (-1.0 / 132.0
                                            + inv2 * (691.0 / 32760.0
                                                + inv2 * (-1.0 / 12.0 + inv2 * 3617.0 / 8160.0)))))));
    shift + x.ln() - 0.5 * inv + series
}

/// Log-gamma for positive arguments. Stirling series for `x >= 7`, shifted below.
pub fn ln_gamma(mut x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma is only needed for positive arguments");
    let mut shift = 0.0;
    while x < 7.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360360.0 + inv2 / 156.0))))));
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// `KL(Dir(phi) || Dir(xi))` in closed form.
pub fn kl_dirichlet(phi: &[f64], xi: &[f64]) -> f64 {
    let phi_total: f64 = phi.iter().sum();
    let xi_total: f64 = xi.iter().sum();
    let dg_total = digamma(phi_total);
    let mut acc = ln_gamma(phi_total) - ln_gamma(xi_total);
    for (&p, &x) in phi.iter().zip(xi) {
        acc += ln_gamma(x) - ln_gamma(p) + (p - x) * (digamma(p) - dg_total);
    }
    acc
}

/// A row-structured block of Dirichlet concentrations, stored as a shared
/// base plus integer counts so that observing and un-observing is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletBlock {
    k: usize,
    base: Arc<[f64]>,
    base_totals: Arc<[f64]>,
    counts: Vec<u32>,
    row_counts: Vec<u32>,
}

impl DirichletBlock {
    pub fn new(rows: &[DirichletParams]) -> Result<Self> {
        let k = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::ShapeMismatch("Dirichlet block has no rows".into()))?;
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(format!(
                "Dirichlet row {i} has {} entries, row 0 has {k}",
                rows[i].len()
            )));
        }
        let base: Vec<f64> = rows.iter().flat_map(|r| r.alpha().iter().copied()).collect();
        Ok(Self::from_flat(k, base))
    }

    pub(crate) fn from_flat(k: usize, base: Vec<f64>) -> Self {
        let n_rows = base.len() / k;
        let totals: Vec<f64> = base.chunks(k).map(|r| r.iter().sum()).collect();
        Self {
            k,
            base: base.into(),
            base_totals: totals.into(),
            counts: vec![0; n_rows * k],
            row_counts: vec![0; n_rows],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_counts.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn base_row(&self, row: usize) -> &[f64] {
        &self.base[row * self.k..(row + 1) * self.k]
    }

    /// Concentrations of one row after the recorded observations.
    pub fn row_alpha(&self, row: usize) -> Vec<f64> {
        let lo = row * self.k;
        (0..self.k)
            .map(|j| self.base[lo + j] + self.counts[lo + j] as f64)
            .collect()
    }

    pub fn row_params(&self, row: usize) -> DirichletParams {
        DirichletParams {
            alpha: self.row_alpha(row),
        }
    }

    /// Sequential predictive of `target` given the row's observations so far.
    #[inline]
    pub fn predict(&self, row: usize, target: usize) -> f64 {
        let i = row * self.k + target;
        (self.base[i] + self.counts[i] as f64)
            / (self.base_totals[row] + self.row_counts[row] as f64)
    }

    #[inline]
    pub fn observe(&mut self, row: usize, target: usize) {
        self.counts[row * self.k + target] += 1;
        self.row_counts[row] += 1;
    }

    #[inline]
    pub fn unobserve(&mut self, row: usize, target: usize) {
        self.counts[row * self.k + target] -= 1;
        self.row_counts[row] -= 1;
    }

    /// Same shape and base with all counts folded into a fresh base.
    pub fn posterior_as_base(&self) -> Self {
        let alpha: Vec<f64> = (0..self.n_rows()).flat_map(|r| self.row_alpha(r)).collect();
        Self::from_flat(self.k, alpha)
    }

    /// Log Dirichlet-multinomial probability of all recorded counts under the base.
    pub fn log_evidence(&self) -> f64 {
        (0..self.n_rows())
            .map(|r| {
                let lo = r * self.k;
                log_polya(&self.base[lo..lo + self.k], &self.counts[lo..lo + self.k])
            })
            .sum()
    }
}
