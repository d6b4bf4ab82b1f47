//! Independent brute-force oracles and the suite that checks the main
//! implementations against them.
//!
//! The oracles deliberately avoid the machinery they check: posterior
//! weights come from enumerating state paths and integrating each Beta row
//! on a midpoint grid, evidences from the ratio-of-Gamma closed form,
//! capacities from grid search over the input simplex, and mutual
//! information from the entropy identity.

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{compute_posterior_factor, history_weights};
use crate::model::{Block, ModelPrior, ModelSpaces, ParamBelief};
use crate::motivation::{blahut_arimoto, predictive_information_value, BA_MAX_ITER, BA_TOL};
use crate::pa_loop::History;
use crate::par::Exec;
use crate::prob::{entropy, ln_gamma, mutual_information, Categorical, ConditionalTable, DirichletParams};
use crate::view::{PosteriorView, ViewComponent};

pub const GRID_STEP: f64 = 1e-3;
/// Largest number of simplex grid points a capacity search may visit.
pub const GRID_POINT_CAP: usize = 2_000_000;

pub const SUITES: [&str; 4] = ["exact_grid", "polya_closed_form", "capacity_grid", "information"];

/// Beta-row integrals on a midpoint grid, cached by (alpha, beta, counts).
pub struct BetaGrid {
    step: f64,
    cache: HashMap<(u64, u64, u32, u32), f64>,
}

impl BetaGrid {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            cache: HashMap::new(),
        }
    }

    /// `E[theta^c0 (1 - theta)^c1]` under Beta(a, b), with the prior density
    /// normalized on the same grid.
    pub fn moment(&mut self, a: f64, b: f64, c0: u32, c1: u32) -> f64 {
        let step = self.step;
        *self.cache.entry((a.to_bits(), b.to_bits(), c0, c1)).or_insert_with(|| {
            let n = (1.0 / step).round() as usize;
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                let th = (i as f64 + 0.5) * step;
                let d = th.powf(a - 1.0) * (1.0 - th).powf(b - 1.0);
                den += d;
                num += d * th.powi(c0 as i32) * (1.0 - th).powi(c1 as i32);
            }
            num / den
        })
    }
}

fn dirichlet_rows(block: &Block, what: &str) -> Result<Vec<Vec<f64>>> {
    match block {
        Block::Dirichlet(d) => Ok((0..d.n_rows()).map(|r| d.base_row(r).to_vec()).collect()),
        Block::Known(_) => Err(Error::OracleInfeasible(format!("{what} block is known, grid needs Dirichlet rows"))),
    }
}

/// Base concentrations of a Dirichlet-only belief as (sensor, transition, initial).
fn base_rows(b: &ParamBelief) -> Result<[Vec<Vec<f64>>; 3]> {
    Ok([
        dirichlet_rows(&b.sensor, "sensor")?,
        dirichlet_rows(&b.transition, "transition")?,
        dirichlet_rows(&b.initial, "initial")?,
    ])
}

/// Per-row target counts of the state path `envs` under history `h`.
fn path_counts(sp: &ModelSpaces, h: &History, envs: &[usize]) -> [Vec<Vec<u32>>; 3] {
    let mut sensor = vec![vec![0; sp.n_sensor]; sp.n_env];
    let mut transition = vec![vec![0; sp.n_env]; sp.n_action * sp.n_env];
    let mut initial = vec![vec![0; sp.n_env]];
    initial[0][envs[0]] += 1;
    for (tau, &e) in envs.iter().enumerate() {
        sensor[e][h.sensors()[tau]] += 1;
        if tau > 0 {
            transition[sp.transition_row(h.actions()[tau - 1], envs[tau - 1])][e] += 1;
        }
    }
    [sensor, transition, initial]
}

fn all_paths(n: usize, len: usize) -> Vec<Vec<usize>> {
    (0..n.pow(len as u32))
        .map(|mut i| {
            let mut p = vec![0; len];
            for slot in p.iter_mut().rev() {
                *slot = i % n;
                i /= n;
            }
            p
        })
        .collect()
}

fn check_grid_instance(prior: &ModelPrior, h: &History) -> Result<[Vec<Vec<f64>>; 3]> {
    let sp = prior.spaces;
    if (sp.n_env, sp.n_sensor, sp.n_action) != (2, 2, 2) {
        return Err(Error::OracleInfeasible(format!(
            "grid integration needs binary spaces, got {}x{}x{}",
            sp.n_env, sp.n_sensor, sp.n_action
        )));
    }
    let rows = base_rows(prior.as_single().map_err(|_| Error::OracleInfeasible("mixture prior".into()))?)?;
    if rows.iter().flatten().flatten().any(|&a| a < 1.0) {
        return Err(Error::OracleInfeasible("grid integration needs concentrations >= 1".into()));
    }
    if h.t() > 8 {
        return Err(Error::OracleInfeasible(format!("{} steps exceed the enumeration limit of 8", h.t())));
    }
    h.check_spaces(2, 2)?;
    Ok(rows)
}

/// Unnormalized evidence of each state path under grid integration.
pub fn grid_path_evidence(prior: &ModelPrior, h: &History, grid: &mut BetaGrid) -> Result<Vec<(Vec<usize>, f64)>> {
    let rows = check_grid_instance(prior, h)?;
    let sp = prior.spaces;
    Ok(all_paths(2, h.t())
        .into_iter()
        .map(|envs| {
            let counts = path_counts(&sp, h, &envs);
            let mut ev = 1.0;
            for (alphas, cs) in rows.iter().zip(&counts) {
                for (a, c) in alphas.iter().zip(cs) {
                    ev *= grid.moment(a[0], a[1], c[0], c[1]);
                }
            }
            (envs, ev)
        })
        .collect())
}

/// One-step predictive `p(s | a, h)` as a ratio of grid evidences.
pub fn grid_one_step(prior: &ModelPrior, h: &History, action: usize, grid: &mut BetaGrid) -> Result<Vec<f64>> {
    let z: f64 = grid_path_evidence(prior, h, grid)?.iter().map(|p| p.1).sum();
    (0..2)
        .map(|s| {
            let ext = h.append(s, action);
            Ok(grid_path_evidence(prior, &ext, grid)?.iter().map(|p| p.1).sum::<f64>() / z)
        })
        .collect()
}

fn polya_closed_form(alpha: &[f64], counts: &[u32]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let n: u32 = counts.iter().sum();
    let mut out = ln_gamma(total) - ln_gamma(total + n as f64);
    for (a, &c) in alpha.iter().zip(counts) {
        out += ln_gamma(a + c as f64) - ln_gamma(*a);
    }
    out
}

/// Log evidence of a history by summing closed-form Pólya terms over all
/// state paths of a single-component Dirichlet prior.
pub fn closed_form_log_evidence(prior: &ModelPrior, h: &History) -> Result<f64> {
    let sp = prior.spaces;
    let rows = base_rows(prior.as_single().map_err(|_| Error::OracleInfeasible("mixture prior".into()))?)?;
    if (sp.n_env as f64).powi(h.t() as i32) > 1e6 {
        return Err(Error::OracleInfeasible("too many state paths".into()));
    }
    let logs: Vec<f64> = all_paths(sp.n_env, h.t())
        .into_iter()
        .map(|envs| {
            let counts = path_counts(&sp, h, &envs);
            rows.iter()
                .zip(&counts)
                .flat_map(|(a, c)| a.iter().zip(c))
                .map(|(a, c)| polya_closed_form(a, c))
                .sum()
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln())
}

/// All histories with `1..=max_t` sensor values over binary spaces.
pub fn binary_histories(max_t: usize) -> Vec<History> {
    let mut out = Vec::new();
    let mut frontier: Vec<History> = (0..2).map(History::init).collect();
    for _ in 1..=max_t {
        out.extend(frontier.iter().cloned());
        frontier = frontier
            .iter()
            .flat_map(|h| (0..4).map(move |k| h.append(k % 2, k / 2)))
            .collect();
    }
    out
}

/// Mutual information of a channel with input distribution `p`.
fn channel_information(channel: &[Vec<f64>], p: &[f64]) -> f64 {
    let ny = channel[0].len();
    let mut py = vec![0.0; ny];
    for (w, row) in p.iter().zip(channel) {
        for (y, q) in row.iter().enumerate() {
            py[y] += w * q;
        }
    }
    let h = |v: &[f64]| -v.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>();
    h(&py) - p.iter().zip(channel).map(|(w, row)| w * h(row)).sum::<f64>()
}

/// Capacity by exhaustive search over the input simplex on a grid.
pub fn grid_capacity(channel: &[Vec<f64>], step: f64) -> Result<f64> {
    let n = channel.len();
    let k = (1.0 / step).round() as usize;
    // Compositions of k into n parts.
    let points = (1..n).fold(1.0, |acc, i| acc * (k + i) as f64 / i as f64);
    if points > GRID_POINT_CAP as f64 {
        return Err(Error::OracleInfeasible(format!("{points:.0} grid points for {n} inputs")));
    }
    fn walk(channel: &[Vec<f64>], k: usize, left: usize, p: &mut Vec<f64>, best: &mut f64) {
        let n = channel.len();
        if p.len() + 1 == n {
            p.push(left as f64 / k as f64);
            *best = best.max(channel_information(channel, p));
            p.pop();
            return;
        }
        for i in 0..=left {
            p.push(i as f64 / k as f64);
            walk(channel, k, left - i, p, best);
            p.pop();
        }
    }
    let mut best = 0.0;
    walk(channel, k, k, &mut Vec::with_capacity(n), &mut best);
    Ok(best)
}

/// The channels of the shipped capacity suite.
pub fn capacity_suite() -> Vec<(&'static str, Vec<Vec<f64>>)> {
    vec![
        ("identity-2", vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        ("bsc-0.1", vec![vec![0.9, 0.1], vec![0.1, 0.9]]),
        ("z-0.3", vec![vec![1.0, 0.0], vec![0.3, 0.7]]),
        ("erasure-2", vec![vec![0.8, 0.2, 0.0], vec![0.0, 0.2, 0.8]]),
        ("identity-3", vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]),
        (
            "noisy-3",
            vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.25, 0.25, 0.5]],
        ),
        ("merge-3", vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<26} cases={:<5} max_deviation={:.3e} tolerance={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_deviation,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<CheckResult>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed()).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Suites to run; `None` runs all of them.
    pub suites: Option<Vec<String>>,
    /// Longest history (in sensor values) for the enumeration checks.
    pub max_t: usize,
    /// Negative control: scale the prior concentrations handed to the main
    /// implementation, but not to the oracles.
    pub corrupt_prior: bool,
    pub exec: Exec,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            suites: None,
            max_t: 4,
            corrupt_prior: false,
            exec: Exec::default(),
        }
    }
}

fn scaled(prior: &ModelPrior, factor: f64) -> Result<ModelPrior> {
    let scale = |b: &Block| -> Result<Block> {
        match b {
            Block::Dirichlet(d) => Block::dirichlet(
                &(0..d.n_rows())
                    .map(|r| DirichletParams::new(d.base_row(r).iter().map(|a| a * factor).collect()))
                    .collect::<Result<Vec<_>>>()?,
            ),
            known => Ok(known.clone()),
        }
    };
    let components = prior
        .components
        .iter()
        .map(|(w, b)| {
            let nb = ParamBelief::new(&prior.spaces, scale(&b.sensor)?, scale(&b.transition)?, scale(&b.initial)?)?;
            Ok((*w, nb))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelPrior {
        spaces: prior.spaces,
        components,
    })
}

/// Binary instances for the enumeration checks: a uniform prior and a
/// skewed one.
pub fn binary_priors() -> Vec<ModelPrior> {
    let sp = ModelSpaces::new(2, 2, 2).expect("non-empty spaces");
    let skewed = |rows: &[[f64; 2]]| {
        Block::dirichlet(&rows.iter().map(|r| DirichletParams::new(r.to_vec()).unwrap()).collect::<Vec<_>>()).unwrap()
    };
    let b = ParamBelief::new(
        &sp,
        skewed(&[[3.0, 1.0], [1.0, 2.0]]),
        skewed(&[[2.0, 1.0], [1.0, 1.5], [1.0, 3.0], [2.5, 1.0]]),
        skewed(&[[1.0, 2.0]]),
    )
    .unwrap();
    vec![
        ModelPrior::symmetric(sp, 1.0).unwrap(),
        ModelPrior::single(sp, b).unwrap(),
    ]
}

/// Posterior weights and one-step predictives against grid integration;
/// deviations are total variation distances.
pub fn check_exact_grid(priors: &[ModelPrior], opts: &OracleOptions) -> Result<CheckResult> {
    let histories = binary_histories(opts.max_t);
    let mut cases = 0;
    let mut max_dev: f64 = 0.0;
    for prior in priors {
        let main_prior = if opts.corrupt_prior { scaled(prior, 1.5)? } else { prior.clone() };
        let devs = opts.exec.try_map_range(histories.len(), |i| {
            let h = &histories[i];
            let mut grid = BetaGrid::new(GRID_STEP);
            let paths = grid_path_evidence(prior, h, &mut grid)?;
            let z: f64 = paths.iter().map(|p| p.1).sum();
            let (weights, _) = history_weights(&main_prior, h, usize::MAX)?;
            let mut tv = 0.0;
            for (envs, ev) in &paths {
                let w = weights.iter().find(|w| &w.envs == envs).map_or(0.0, |w| w.weight);
                tv += (w - ev / z).abs();
            }
            let mut dev: f64 = tv / 2.0;
            let factor = compute_posterior_factor(&main_prior, h, usize::MAX)?;
            let mut last = [0.0; 2];
            for (envs, ev) in &paths {
                last[envs[envs.len() - 1]] += ev / z;
            }
            for e in &factor.entries {
                last[e.last_env] -= e.weight;
            }
            dev = dev.max((last[0].abs() + last[1].abs()) / 2.0);
            for a in 0..2 {
                let main = factor.one_step_predictive(a)?;
                let oracle = grid_one_step(prior, h, a, &mut grid)?;
                let tv: f64 = main.probs().iter().zip(&oracle).map(|(x, y)| (x - y).abs()).sum();
                dev = dev.max(tv / 2.0);
            }
            Ok(dev)
        })?;
        cases += devs.len();
        max_dev = devs.into_iter().fold(max_dev, f64::max);
    }
    Ok(CheckResult {
        name: "exact_grid".into(),
        cases,
        max_deviation: max_dev,
        tolerance: 1e-4,
    })
}

/// Exact log evidence against the closed-form Pólya sum.
pub fn check_polya(priors: &[ModelPrior], opts: &OracleOptions) -> Result<CheckResult> {
    let histories = binary_histories(opts.max_t);
    let mut cases = 0;
    let mut max_dev: f64 = 0.0;
    for prior in priors {
        let main_prior = if opts.corrupt_prior { scaled(prior, 1.5)? } else { prior.clone() };
        let devs = opts.exec.try_map_range(histories.len(), |i| {
            let h = &histories[i];
            let main = compute_posterior_factor(&main_prior, h, usize::MAX)?.log_evidence;
            Ok((main - closed_form_log_evidence(prior, h)?).abs())
        })?;
        cases += devs.len();
        max_dev = devs.into_iter().fold(max_dev, f64::max);
    }
    Ok(CheckResult {
        name: "polya_closed_form".into(),
        cases,
        max_deviation: max_dev,
        tolerance: 1e-10,
    })
}

pub fn check_capacity(opts: &OracleOptions) -> Result<CheckResult> {
    let suite = capacity_suite();
    let devs = opts.exec.try_map_range(suite.len(), |i| {
        let ch = &suite[i].1;
        let ba = blahut_arimoto(ch, BA_TOL, BA_MAX_ITER)?.value;
        Ok((ba - grid_capacity(ch, GRID_STEP)?).abs())
    })?;
    Ok(CheckResult {
        name: "capacity_grid".into(),
        cases: devs.len(),
        max_deviation: devs.into_iter().fold(0.0, f64::max),
        tolerance: 1e-3,
    })
}

/// Mutual information against the entropy identity on random joints, and
/// predictive information on two closed-form cases.
pub fn check_information() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut max_dev: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..50 {
        let nx = rng.random_range(1..5);
        let ny = rng.random_range(1..5);
        let w: Vec<f64> = (0..nx * ny).map(|_| rng.random::<f64>().powi(3)).collect();
        let joint = Categorical::from_weights(w)?;
        let p = joint.probs();
        let px = Categorical::new((0..nx).map(|x| p[x * ny..(x + 1) * ny].iter().sum()).collect())?;
        let py = Categorical::new((0..ny).map(|y| (0..nx).map(|x| p[x * ny + y]).sum()).collect())?;
        let identity = entropy(&px) + entropy(&py) - entropy(&joint);
        max_dev = max_dev.max((mutual_information(&joint, nx, ny)? - identity).abs());
        cases += 1;
    }
    // All-zeros versus all-ones worlds mixed evenly: two steps share ln 2.
    let sp = ModelSpaces::new(2, 2, 1)?;
    let stay = ConditionalTable::identity(2);
    let world = |s: usize| -> Result<ParamBelief> {
        ParamBelief::new(
            &sp,
            Block::known(ConditionalTable::new(vec![Categorical::delta(2, s); 2])?),
            Block::known(stay.clone()),
            Block::known(ConditionalTable::new(vec![Categorical::uniform(2)])?),
        )
    };
    let start = Categorical::uniform(2);
    let view = PosteriorView::new(
        sp,
        vec![
            ViewComponent {
                weight: 0.5,
                start: start.clone(),
                belief: world(0)?,
                group: 0,
            },
            ViewComponent {
                weight: 0.5,
                start: start.clone(),
                belief: world(1)?,
                group: 1,
            },
        ],
    )?;
    max_dev = max_dev.max((predictive_information_value(&view, &[0, 0])? - std::f64::consts::LN_2).abs());
    let iid = ParamBelief::new(
        &sp,
        Block::known(ConditionalTable::new(vec![Categorical::new(vec![0.3, 0.7])?; 2])?),
        Block::known(stay),
        Block::known(ConditionalTable::new(vec![Categorical::uniform(2)])?),
    )?;
    let view = PosteriorView::single(sp, start, iid)?;
    max_dev = max_dev.max(predictive_information_value(&view, &[0, 0, 0, 0])?.abs());
    cases += 2;
    Ok(CheckResult {
        name: "information".into(),
        cases,
        max_deviation: max_dev,
        tolerance: 1e-9,
    })
}

/// Runs the selected suites. `priors` overrides the shipped binary
/// instances for the enumeration checks.
pub fn run_oracles(priors: Option<&[ModelPrior]>, opts: &OracleOptions) -> Result<OracleReport> {
    let shipped;
    let priors = match priors {
        Some(p) => p,
        None => {
            shipped = binary_priors();
            &shipped
        }
    };
    let selected: Vec<&str> = match &opts.suites {
        None => SUITES.to_vec(),
        Some(names) => {
            for n in names {
                if !SUITES.contains(&n.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "unknown oracle suite {n:?}; expected one of {}",
                        SUITES.join(", ")
                    )));
                }
            }
            SUITES.iter().copied().filter(|s| names.iter().any(|n| n == s)).collect()
        }
    };
    let mut report = OracleReport::default();
    for name in selected {
        let check = match name {
            "exact_grid" => check_exact_grid(priors, opts)?,
            "polya_closed_form" => check_polya(priors, opts)?,
            "capacity_grid" => check_capacity(opts)?,
            _ => check_information()?,
        };
        log::info!("{check}");
        report.checks.push(check);
    }
    Ok(report)
}
