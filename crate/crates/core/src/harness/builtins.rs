//! Named environments shipped with the harness.

use crate::error::{Error, Result};
use crate::pa_loop::EnvironmentSpec;
use crate::prob::{Categorical, ConditionalTable};

pub const BUILTINS: [&str; 3] = ["flip-2", "chain-4", "tmaze-6"];

pub fn builtin(name: &str) -> Result<EnvironmentSpec> {
    match name {
        "flip-2" => Ok(flip(0.9)),
        "chain-4" => Ok(chain(4)),
        "tmaze-6" => Ok(tmaze()),
        other => Err(Error::InvalidArgument(format!(
            "unknown builtin environment {other:?}; expected one of {}",
            BUILTINS.join(", ")
        ))),
    }
}

/// Two states, action 0 keeps the state and action 1 flips it. The sensor
/// reports the state with probability `accuracy`.
pub fn flip(accuracy: f64) -> EnvironmentSpec {
    let d = |i| Categorical::delta(2, i);
    let noisy = |i: usize| {
        let mut p = vec![1.0 - accuracy; 2];
        p[i] = accuracy;
        Categorical::new(p).expect("accuracy in [0, 1]")
    };
    EnvironmentSpec::new(
        d(0),
        ConditionalTable::new(vec![d(0), d(1), d(1), d(0)]).expect("stochastic"),
        ConditionalTable::new(vec![noisy(0), noisy(1)]).expect("stochastic"),
        2,
    )
    .expect("consistent shapes")
}

/// `n` states in a line, action 0 moves left and 1 moves right, clamped at
/// the ends. The sensor reveals the state; episodes start at the left end.
pub fn chain(n: usize) -> EnvironmentSpec {
    let mut rows = Vec::with_capacity(2 * n);
    for a in 0..2 {
        for e in 0..n {
            let to = if a == 0 { e.saturating_sub(1) } else { (e + 1).min(n - 1) };
            rows.push(Categorical::delta(n, to));
        }
    }
    EnvironmentSpec::new(
        Categorical::delta(n, 0),
        ConditionalTable::new(rows).expect("stochastic"),
        ConditionalTable::identity(n),
        2,
    )
    .expect("consistent shapes")
}

// States: 0/1 start in context A/B, 2/3 cue in context A/B, 4 reward, 5 punish.
// Actions: 0 visit the cue, 1 take the left arm, 2 take the right arm.
// Sensors: 0 neutral, 1 cue says left, 2 cue says right, 3 reward, 4 punish.
const REWARD: usize = 4;
const PUNISH: usize = 5;

/// A T-maze whose rewarded arm depends on a hidden context. Visiting the
/// cue reveals the context; both arms are absorbing.
pub fn tmaze() -> EnvironmentSpec {
    let d = |i| Categorical::delta(6, i);
    let mut rows = Vec::with_capacity(18);
    for a in 0..3 {
        for e in 0..6 {
            let context_a = e % 2 == 0;
            let next = match (e, a) {
                (REWARD | PUNISH, _) => e,
                (_, 0) => 2 + e % 2,
                (_, 1) => if context_a { REWARD } else { PUNISH },
                _ => if context_a { PUNISH } else { REWARD },
            };
            rows.push(d(next));
        }
    }
    let sensor = [0, 0, 1, 2, 3, 4].map(|s| Categorical::delta(5, s));
    EnvironmentSpec::new(
        Categorical::new(vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).expect("stochastic"),
        ConditionalTable::new(rows).expect("stochastic"),
        ConditionalTable::new(sensor.to_vec()).expect("stochastic"),
        3,
    )
    .expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let sizes: Vec<_> = BUILTINS
            .iter()
            .map(|n| {
                let e = builtin(n).unwrap();
                (e.n_env(), e.n_sensor(), e.n_action)
            })
            .collect();
        assert_eq!(sizes, [(2, 2, 2), (4, 4, 2), (6, 5, 3)]);
        assert!(builtin("maze").is_err());
    }

    #[test]
    fn tmaze_arms_depend_on_context() {
        let m = tmaze();
        assert_eq!(m.transition_row(1, 0).argmax(), REWARD);
        assert_eq!(m.transition_row(1, 1).argmax(), PUNISH);
        assert_eq!(m.transition_row(2, 3).argmax(), REWARD);
        assert_eq!(m.transition_row(0, 1).argmax(), 3);
        assert_eq!(m.transition_row(0, PUNISH).argmax(), PUNISH);
    }
}
