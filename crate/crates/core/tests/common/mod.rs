//! Shared fixtures and independent reference computations for the
//! integration tests. Special functions come from statrs so the references
//! do not share code with the library.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use paip::model::{Block, DesiredPrior, ModelPrior, ModelSpaces, ParamBelief};
use paip::pa_loop::History;
use paip::prob::{Categorical, ConditionalTable, DirichletParams};
use paip::variational::VariationalParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A strictly positive random distribution.
pub fn random_categorical(rng: &mut ChaCha8Rng, n: usize) -> Categorical {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    Categorical::from_weights(w).unwrap()
}

pub fn random_table(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> ConditionalTable {
    ConditionalTable::new((0..rows).map(|_| random_categorical(rng, k)).collect()).unwrap()
}

pub fn random_dirichlet_block(rng: &mut ChaCha8Rng, rows: usize, k: usize, lo: f64, hi: f64) -> Block {
    let params: Vec<_> = (0..rows)
        .map(|_| DirichletParams::new((0..k).map(|_| rng.random_range(lo..hi)).collect()).unwrap())
        .collect();
    Block::dirichlet(&params).unwrap()
}

pub fn random_belief(rng: &mut ChaCha8Rng, sp: &ModelSpaces, lo: f64, hi: f64) -> ParamBelief {
    ParamBelief::new(
        sp,
        random_dirichlet_block(rng, sp.n_env, sp.n_sensor, lo, hi),
        random_dirichlet_block(rng, sp.n_action * sp.n_env, sp.n_env, lo, hi),
        random_dirichlet_block(rng, 1, sp.n_env, lo, hi),
    )
    .unwrap()
}

pub fn random_history(rng: &mut ChaCha8Rng, sp: &ModelSpaces, t: usize) -> History {
    let mut h = History::init(rng.random_range(0..sp.n_sensor));
    for _ in 1..t {
        h.push(rng.random_range(0..sp.n_sensor), rng.random_range(0..sp.n_action));
    }
    h
}

pub fn random_variational(rng: &mut ChaCha8Rng, sp: &ModelSpaces, t: usize) -> VariationalParams {
    VariationalParams {
        env: (0..t).map(|_| random_categorical(rng, sp.n_env)).collect(),
        blocks: random_belief(rng, sp, 0.3, 6.0),
    }
}

/// Closed-form log Dirichlet-multinomial probability of a count sequence.
pub fn log_polya(alpha: &[f64], counts: &[u32]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    ln_gamma(a0) - ln_gamma(a0 + n)
        + alpha
            .iter()
            .zip(counts)
            .map(|(a, &c)| ln_gamma(a + c as f64) - ln_gamma(*a))
            .sum::<f64>()
}

pub fn rows_of(block: &Block) -> Vec<Vec<f64>> {
    match block {
        Block::Dirichlet(d) => (0..d.n_rows()).map(|r| d.row_alpha(r)).collect(),
        Block::Known(_) => panic!("reference computations need Dirichlet blocks"),
    }
}

/// Every state path of length `len` over `n` states.
pub fn paths(n: usize, len: usize) -> Vec<Vec<usize>> {
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

/// Counts per row of the sensor, transition and initial blocks.
pub fn path_counts(sp: &ModelSpaces, h: &History, envs: &[usize]) -> [Vec<Vec<u32>>; 3] {
    let mut sensor = vec![vec![0; sp.n_sensor]; sp.n_env];
    let mut transition = vec![vec![0; sp.n_env]; sp.n_action * sp.n_env];
    let mut initial = vec![vec![0; sp.n_env]];
    initial[0][envs[0]] += 1;
    for (tau, &e) in envs.iter().enumerate() {
        sensor[e][h.sensors()[tau]] += 1;
        if tau > 0 {
            transition[h.actions()[tau - 1] * sp.n_env + envs[tau - 1]][e] += 1;
        }
    }
    [sensor, transition, initial]
}

fn blocks(b: &ParamBelief) -> [Vec<Vec<f64>>; 3] {
    [rows_of(&b.sensor), rows_of(&b.transition), rows_of(&b.initial)]
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log evidence and normalized weights of every state path.
pub fn path_posterior(sp: &ModelSpaces, h: &History, prior: &ParamBelief) -> (f64, Vec<(Vec<usize>, f64)>) {
    let alpha = blocks(prior);
    let all = paths(sp.n_env, h.t());
    let logs: Vec<f64> = all
        .iter()
        .map(|envs| {
            let c = path_counts(sp, h, envs);
            (0..3)
                .map(|b| alpha[b].iter().zip(&c[b]).map(|(a, c)| log_polya(a, c)).sum::<f64>())
                .sum()
        })
        .collect();
    let lz = logsumexp(&logs);
    let w = all.into_iter().zip(&logs).map(|(p, l)| (p, (l - lz).exp())).collect();
    (lz, w)
}

/// `E_{Dir(phi)}[ln Dir(theta; beta)]`.
fn cross_dirichlet(phi: &[f64], beta: &[f64]) -> f64 {
    let p0: f64 = phi.iter().sum();
    let b0: f64 = beta.iter().sum();
    ln_gamma(b0) - beta.iter().map(|b| ln_gamma(*b)).sum::<f64>()
        + beta
            .iter()
            .zip(phi)
            .map(|(b, p)| (b - 1.0) * (digamma(*p) - digamma(p0)))
            .sum::<f64>()
}

/// `KL[r || p(states, theta | h)]` by enumerating state paths.
pub fn kl_to_exact_posterior(sp: &ModelSpaces, phi: &VariationalParams, h: &History, prior: &ParamBelief) -> f64 {
    let alpha = blocks(prior);
    let q = blocks(&phi.blocks);
    let mut neg_entropy: f64 = phi
        .env
        .iter()
        .flat_map(|c| c.probs().iter())
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum();
    for block in &q {
        for row in block {
            neg_entropy += cross_dirichlet(row, row);
        }
    }
    let (_, post) = path_posterior(sp, h, &prior.clone());
    let mut cross = 0.0;
    for (envs, w) in post {
        let r: f64 = envs.iter().enumerate().map(|(tau, &e)| phi.env[tau].prob(e)).product();
        if r == 0.0 {
            continue;
        }
        let c = path_counts(sp, h, &envs);
        let mut lp = w.ln();
        for b in 0..3 {
            for ((a, cnt), qrow) in alpha[b].iter().zip(&c[b]).zip(&q[b]) {
                let beta: Vec<f64> = a.iter().zip(cnt).map(|(a, c)| a + *c as f64).collect();
                lp += cross_dirichlet(qrow, &beta);
            }
        }
        cross += r * lp;
    }
    neg_entropy - cross
}

/// Per-row posterior counts `sum_paths w * counts` of the exact posterior.
pub fn expected_counts(sp: &ModelSpaces, h: &History, prior: &ParamBelief) -> [Vec<Vec<f64>>; 3] {
    let (_, post) = path_posterior(sp, h, prior);
    let mut out = [
        vec![vec![0.0; sp.n_sensor]; sp.n_env],
        vec![vec![0.0; sp.n_env]; sp.n_action * sp.n_env],
        vec![vec![0.0; sp.n_env]],
    ];
    for (envs, w) in post {
        let c = path_counts(sp, h, &envs);
        for b in 0..3 {
            for (o, r) in out[b].iter_mut().zip(&c[b]) {
                for (x, k) in o.iter_mut().zip(r) {
                    *x += w * *k as f64;
                }
            }
        }
    }
    out
}

/// `sum_tau 1.(A x log A) s_tau - o_tau.(log o_tau - log C_tau)` with
/// `s_tau = B_{a_tau} s_{tau-1}` and `o_tau = A s_tau`.
pub fn friston_vectorized(a: &DMatrix<f64>, b: &[DMatrix<f64>], c: &DesiredPrior, start: &DVector<f64>, actions: &[usize]) -> f64 {
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let a_log_a = a.map(xlogx);
    let ones = DVector::from_element(a.nrows(), 1.0);
    let mut s = start.clone();
    let mut total = 0.0;
    for (tau, &act) in actions.iter().enumerate() {
        s = &b[act] * s;
        let o = a * &s;
        let log_c = DVector::from_iterator(o.len(), c.at(tau).probs().iter().map(|p| p.ln()));
        let log_o = o.map(|x| if x > 0.0 { x.ln() } else { 0.0 });
        total += (ones.transpose() * &a_log_a * &s)[0] - o.dot(&(log_o - log_c));
    }
    total
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// A binary model whose blocks are all uniform Dirichlet.
pub fn binary_uniform_prior() -> ModelPrior {
    ModelPrior::symmetric(ModelSpaces::new(2, 2, 2).unwrap(), 1.0).unwrap()
}
