mod common;

use paip::exact::compute_posterior_factor;
use paip::pa_loop::{EnvironmentSpec, History};
use paip::prob::{Categorical, ConditionalTable};
use paip::url::{embed_history_env, mixture_update, sequential_posterior, EnvClass, UrlComponent};
use paip::view::DEFAULT_CAP;
use paip::Error;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

fn constant(p0: f64) -> UrlComponent {
    let c = Categorical::new(vec![p0, 1.0 - p0]).unwrap();
    UrlComponent::Markov {
        initial: c.clone(),
        table: ConditionalTable::new(vec![c; 4]).unwrap(),
    }
}

fn pair(p: f64, q: f64) -> EnvClass {
    EnvClass::new(2, 2, vec![constant(p), constant(q)], Categorical::uniform(2)).unwrap()
}

fn random_member(rng: &mut ChaCha8Rng, hidden: bool) -> UrlComponent {
    if hidden {
        let env = EnvironmentSpec::new(
            common::random_categorical(rng, 2),
            common::random_table(rng, 4, 2),
            common::random_table(rng, 2, 2),
            2,
        )
        .unwrap();
        UrlComponent::Pomdp(env)
    } else {
        UrlComponent::Markov {
            initial: common::random_categorical(rng, 2),
            table: common::random_table(rng, 4, 2),
        }
    }
}

fn random_class(seed: u64, members: usize) -> EnvClass {
    let mut rng = common::rng(seed);
    let components = (0..members).map(|k| random_member(&mut rng, k % 2 == 0)).collect();
    let weights = common::random_categorical(&mut rng, members);
    EnvClass::new(2, 2, components, weights).unwrap()
}

#[test]
fn update_examples() {
    let h = History::init(0);
    assert_eq!(mixture_update(&pair(1.0, 0.0), 0, 0, &h).unwrap().weights.probs(), &[1.0, 0.0]);
    let w = mixture_update(&pair(0.9, 0.1), 0, 1, &h).unwrap().weights;
    assert!((w.prob(0) - 0.9).abs() < 1e-15 && (w.prob(1) - 0.1).abs() < 1e-15);
    assert!(matches!(mixture_update(&pair(1.0, 1.0), 1, 0, &h), Err(Error::ZeroEvidence)));
}

#[test]
fn members_must_share_spaces() {
    let three = UrlComponent::Markov {
        initial: Categorical::uniform(3),
        table: ConditionalTable::uniform(6, 3),
    };
    assert!(EnvClass::new(2, 2, vec![constant(0.5), three], Categorical::uniform(2)).is_err());
    assert!(EnvClass::new(2, 2, vec![constant(0.5)], Categorical::uniform(2)).is_err());
}

#[test]
fn embedded_transitions_follow_concatenation() {
    let m = embed_history_env(&pair(0.8, 0.3), 3, DEFAULT_CAP).unwrap();
    let sp = m.prior.spaces;
    for (_, belief) in &m.prior.components {
        for (e, h) in m.states.iter().enumerate() {
            for a in 0..2 {
                for (e2, next) in m.states.iter().enumerate() {
                    let p = belief.transition.predict(sp.transition_row(a, e), e2);
                    let extends = next.t() == h.t() + 1 && next.prefix(h.t()) == *h && next.actions()[h.t() - 1] == a;
                    let stays = h.t() == m.max_len && e == e2;
                    if !(extends || stays) {
                        assert_eq!(p, 0.0, "{h:?} -{a}-> {next:?}");
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixture_predictive_is_the_weighted_member_sum(seed in any::<u64>(), members in 1usize..5, t in 1usize..5, a in 0usize..2) {
        let class = random_class(seed, members);
        let h = common::random_history(&mut common::rng(seed ^ 3), &paip::model::ModelSpaces::new(1, 2, 2).unwrap(), t);
        let p = class.mixture_predict(&h, a).unwrap();
        for s in 0..2 {
            let direct: f64 = class
                .components
                .iter()
                .zip(class.weights.probs())
                .map(|(c, w)| w * c.predict_next(&h, a).unwrap().prob(s))
                .sum();
            prop_assert!((p.prob(s) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_updates_match_exact_inference(seed in any::<u64>(), members in 2usize..4, t in 1usize..4) {
        let class = random_class(seed, members);
        let h = common::random_history(&mut common::rng(seed ^ 5), &paip::model::ModelSpaces::new(1, 2, 2).unwrap(), t);
        let embedded = embed_history_env(&class, t + 1, DEFAULT_CAP).unwrap();
        let seq = sequential_posterior(&class, &h).unwrap();
        let factor = compute_posterior_factor(&embedded.prior, &h, DEFAULT_CAP).unwrap();
        let w = factor.component_weights(members);
        for (x, y) in seq.weights.probs().iter().zip(&w) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        for a in 0..2 {
            let direct = seq.mixture_predict(&h, a).unwrap();
            let generic = factor.one_step_predictive(a).unwrap();
            prop_assert!(common::tv(direct.probs(), generic.probs()) < 1e-12);
        }
    }

    /// Updating one value at a time equals reweighting by the whole-history likelihood.
    #[test]
    fn sequential_updates_match_batch_bayes(seed in any::<u64>(), members in 1usize..5, t in 1usize..6) {
        let class = random_class(seed, members);
        let h = common::random_history(&mut common::rng(seed ^ 7), &paip::model::ModelSpaces::new(1, 2, 2).unwrap(), t);
        let seq = sequential_posterior(&class, &h).unwrap();
        let joint: Vec<f64> = class
            .components
            .iter()
            .zip(class.weights.probs())
            .map(|(c, w)| {
                let mut l = w * c.predict_initial().prob(h.sensors()[0]);
                for k in 1..h.t() {
                    l *= c.predict_next(&h.prefix(k), h.actions()[k - 1]).unwrap().prob(h.sensors()[k]);
                }
                l
            })
            .collect();
        let z: f64 = joint.iter().sum();
        for (x, y) in seq.weights.probs().iter().zip(&joint) {
            prop_assert!((x - y / z).abs() < 1e-12);
        }
    }
}
