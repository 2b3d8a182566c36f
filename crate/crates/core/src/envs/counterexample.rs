//! One-step MDP where errors in the transition and reward estimates can
//! cancel out: `a0` reaches the rewarding state `s1` w.p. 0.8, `a1` w.p. 0.4.
//!
//! The fixture holds fixed estimates for which transition pessimism alone
//! prefers the worse action `a1`, while pessimism in both models ties them.

use crate::mdp::{TabularMdp, TransitionRow};
use crate::models::{MdpShape, RewardEnsemble, TransitionEnsemble};

pub const TO_REWARD_STATE: [f64; 2] = [0.8, 0.4];

pub fn build_counterexample_mdp() -> TabularMdp {
    let rows = vec![
        two_way(TO_REWARD_STATE[0]),
        two_way(TO_REWARD_STATE[1]),
        TransitionRow::point(1),
        TransitionRow::point(1),
        TransitionRow::point(2),
        TransitionRow::point(2),
    ];
    TabularMdp::new(3, 2, 1, 0, rows, vec![0.0, 1.0, 0.0], vec![false; 3]).expect("well formed")
}

fn two_way(to_s1: f64) -> TransitionRow {
    TransitionRow::from_pairs([(1, to_s1), (2, 1.0 - to_s1)])
}

/// Estimated models for the counterexample.
#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleFixture {
    /// `T_hat(s1 | s0, a)` per action.
    pub estimated_to_s1: [f64; 2],
    /// `u_T(s0, a)` per action.
    pub u_t: [f64; 2],
    /// `r_hat(s1) = r_hat(s2)`.
    pub estimated_reward: f64,
    /// `u_R(s1) = u_R(s2)`.
    pub u_r: f64,
}

pub fn fixture() -> CounterexampleFixture {
    CounterexampleFixture { estimated_to_s1: [0.5, 0.5], u_t: [0.4, 0.1], estimated_reward: 0.5, u_r: 0.5 }
}

impl CounterexampleFixture {
    /// The estimated model with `u_T` mass moved away from `s1`.
    pub fn worst_case_model(&self) -> TabularMdp {
        let m = build_counterexample_mdp();
        let mut rows = m.transitions().to_vec();
        for a in 0..2 {
            rows[a] = two_way(self.estimated_to_s1[a] - self.u_t[a]);
        }
        m.with_transitions(rows).expect("valid rows")
    }

    pub fn estimated_model(&self) -> TabularMdp {
        let m = build_counterexample_mdp();
        let mut rows = m.transitions().to_vec();
        for a in 0..2 {
            rows[a] = two_way(self.estimated_to_s1[a]);
        }
        m.with_transitions(rows).expect("valid rows")
    }

    /// `r_hat - u_R` on every non-start state.
    pub fn pessimistic_state_reward(&self) -> Vec<f64> {
        let r = self.estimated_reward - self.u_r;
        vec![0.0, r, r]
    }

    /// Two-member ensembles reproducing the fixture: members' `T(s1 | s0, a)`
    /// sit at `0.5 +- u_T / 2` and member state rewards at `0.5 +- u_R / 2`,
    /// with `r_max = 1`.
    pub fn ensembles(&self) -> (TransitionEnsemble, RewardEnsemble) {
        let base = build_counterexample_mdp();
        let member = |sign: f64| {
            let mut rows = base.transitions().to_vec();
            for a in 0..2 {
                rows[a] = two_way(self.estimated_to_s1[a] + sign * self.u_t[a] / 4.0);
            }
            rows
        };
        let transitions =
            TransitionEnsemble::from_members(MdpShape::from(&base), vec![member(-1.0), member(1.0)], 1.0, None)
                .expect("valid fixture");
        let reward_member = |sign: f64| {
            let r = self.estimated_reward + sign * self.u_r / 2.0;
            // every action from s0 enters s1 or s2, both worth r
            vec![r, r, 0.0, 0.0, 0.0, 0.0]
        };
        let rewards =
            RewardEnsemble::from_members(2, vec![reward_member(-1.0), reward_member(1.0)]).expect("valid fixture");
        (transitions, rewards)
    }

    /// The true state rewards expressed as an `(s, a)` table under the
    /// estimated dynamics, as a single-member ensemble.
    pub fn true_reward_under_estimate(&self) -> RewardEnsemble {
        let est = self.estimated_model().with_state_reward(vec![0.0, 1.0, 0.0]).expect("valid");
        RewardEnsemble::from_members(2, vec![est.expected_reward_table()]).expect("valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{evaluate_policy, plan_optimal, Policy};
    use approx::assert_abs_diff_eq;

    #[test]
    fn optimal_action_value() {
        let m = build_counterexample_mdp();
        let (pi, rep) = plan_optimal(&m, None).unwrap();
        assert_eq!(pi.greedy_action(0, 0), 0);
        assert_abs_diff_eq!(rep.value, 0.8, epsilon = 1e-12);
        let a1 = Policy::deterministic(1, 3, 2, &[1, 0, 0]).unwrap();
        assert_abs_diff_eq!(evaluate_policy(&m, &a1).unwrap().value, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn fixture_ensembles_match_stated_values() {
        let f = fixture();
        let (t, r) = f.ensembles();
        assert_abs_diff_eq!(t.u_t()[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(t.u_t()[1], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(t.mle_row(0, 0).prob(1), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mle()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.u_r()[1], 0.5, epsilon = 1e-12);
    }
}
