mod common;

use paip::exact::{compute_posterior_factor, log_evidence_default};
use paip::model::{ModelPrior, ModelSpaces};
use paip::pa_loop::History;
use paip::prob::Categorical;
use paip::variational::{approx_predictive_sensor_dist, cavi_fit, vfe, CaviOptions, VariationalParams};
use paip::view::DEFAULT_CAP;
use proptest::prelude::*;

#[test]
fn single_state_posterior_is_in_the_family() {
    let sp = ModelSpaces::new(1, 2, 2).unwrap();
    let prior = ModelPrior::symmetric(sp, 1.0).unwrap();
    let h = History::parse("0 1 1 0 0").unwrap();
    let exact = compute_posterior_factor(&prior, &h, DEFAULT_CAP).unwrap();
    let phi = VariationalParams {
        env: vec![Categorical::delta(1, 0); h.t()],
        blocks: exact.entries[0].belief.collapsed(),
    };
    let belief = prior.as_single().unwrap();
    let f = vfe(&sp, &phi, &h, belief).unwrap();
    assert!((f + exact.log_evidence).abs() < 1e-9);

    let fit = cavi_fit(&sp, &h, belief, &CaviOptions::default()).unwrap();
    assert!(fit.report.converged);
    assert!(fit.report.sweeps <= 2, "{} sweeps", fit.report.sweeps);
    assert!((fit.report.vfe + exact.log_evidence).abs() < 1e-9);

    let approx = approx_predictive_sensor_dist(sp, &phi, &[0, 1]).unwrap();
    let truth = exact.view().predictive_sensor_dist(&[0, 1]).unwrap();
    for (x, y) in approx.probs().iter().zip(truth.probs()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn zero_mass_state_entries_stay_finite() {
    let sp = ModelSpaces::new(2, 2, 2).unwrap();
    let prior = ModelPrior::symmetric(sp, 1.0).unwrap();
    let h = History::parse("0 1 1").unwrap();
    let phi = VariationalParams {
        env: vec![Categorical::delta(2, 0), Categorical::delta(2, 1)],
        blocks: prior.as_single().unwrap().clone(),
    };
    assert!(vfe(&sp, &phi, &h, prior.as_single().unwrap()).unwrap().is_finite());
}

#[test]
fn fit_improves_on_uniform_start() {
    let sp = ModelSpaces::new(2, 2, 2).unwrap();
    let mut rng = common::rng(21);
    let belief = common::random_belief(&mut rng, &sp, 0.5, 3.0);
    let prior = ModelPrior::single(sp, belief.clone()).unwrap();
    let h = History::parse("0 1 1 0 0").unwrap();
    let start = VariationalParams::uniform(&sp, h.t(), &belief);
    let fit = cavi_fit(&sp, &h, &belief, &CaviOptions::default()).unwrap();
    let kl_start = common::kl_to_exact_posterior(&sp, &start, &h, &belief);
    let kl_fit = common::kl_to_exact_posterior(&sp, &fit.params, &h, &belief);
    assert!(kl_fit <= kl_start + 1e-12);

    let future = [1, 0];
    let exact = compute_posterior_factor(&prior, &h, DEFAULT_CAP).unwrap().view().predictive_sensor_dist(&future).unwrap();
    let tv = |phi: &VariationalParams| {
        common::tv(approx_predictive_sensor_dist(sp, phi, &future).unwrap().probs(), exact.probs())
    };
    assert!(tv(&fit.params) <= tv(&start) + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn free_energy_bounds_surprise(seed in any::<u64>(), n_env in 1usize..4, t in 1usize..4) {
        let sp = ModelSpaces::new(n_env, 2, 2).unwrap();
        let mut rng = common::rng(seed);
        let belief = common::random_belief(&mut rng, &sp, 0.3, 4.0);
        let prior = ModelPrior::single(sp, belief.clone()).unwrap();
        let h = common::random_history(&mut rng, &sp, t);
        let phi = common::random_variational(&mut rng, &sp, t);
        let f = vfe(&sp, &phi, &h, &belief).unwrap();
        let lz = log_evidence_default(&prior, &h).unwrap();
        prop_assert!(f + lz >= -1e-9);
        let kl = common::kl_to_exact_posterior(&sp, &phi, &h, &belief);
        prop_assert!((f + lz - kl).abs() < 1e-8, "vfe {} lnZ {} kl {}", f, lz, kl);
    }

    #[test]
    fn cavi_trace_is_monotone(seed in any::<u64>(), n_env in 2usize..4, t in 1usize..6, restarts in 0usize..3) {
        let sp = ModelSpaces::new(n_env, 2, 2).unwrap();
        let mut rng = common::rng(seed);
        let belief = common::random_belief(&mut rng, &sp, 0.3, 4.0);
        let h = common::random_history(&mut rng, &sp, t);
        let opts = CaviOptions { restarts, seed, ..CaviOptions::default() };
        let fit = cavi_fit(&sp, &h, &belief, &opts).unwrap();
        for w in fit.report.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "trace rose {} -> {}", w[0], w[1]);
        }
        prop_assert!((vfe(&sp, &fit.params, &h, &belief).unwrap() - fit.report.vfe).abs() < 1e-9);
    }

    #[test]
    fn approximate_predictive_is_normalized(seed in any::<u64>(), t in 1usize..4, actions in prop::collection::vec(0usize..2, 1..4)) {
        let sp = ModelSpaces::new(3, 2, 2).unwrap();
        let mut rng = common::rng(seed);
        let phi = common::random_variational(&mut rng, &sp, t);
        let p = approx_predictive_sensor_dist(sp, &phi, &actions).unwrap();
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
