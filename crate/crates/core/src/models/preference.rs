use serde::{Deserialize, Serialize};

use super::{spread, RewardEnsemble};
use crate::mdp::{sa_index, Trajectory};

/// Logistic function, computed so that `sigmoid(z) + sigmoid(-z) == 1`
/// holds exactly in floating point.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        1.0 - sigmoid(-z)
    }
}

/// Return of a trajectory under a per-`(s, a)` reward table.
pub fn sa_return(traj: &Trajectory, rewards: &[f64], num_actions: usize) -> f64 {
    traj.state_actions().map(|(s, a)| rewards[sa_index(num_actions, s, a)]).sum()
}

/// Bradley-Terry probability that `a` is preferred to `b`.
pub fn preference_prob(rewards: &[f64], num_actions: usize, a: &Trajectory, b: &Trajectory) -> f64 {
    sigmoid(sa_return(a, rewards, num_actions) - sa_return(b, rewards, num_actions))
}

/// Largest disagreement between ensemble members about `P(a > b)`.
pub fn preference_uncertainty(ensemble: &RewardEnsemble, a: &Trajectory, b: &Trajectory) -> f64 {
    let m = ensemble.num_actions();
    spread(ensemble.members().iter().map(|r| preference_prob(r, m, a, b)))
}

/// One answered comparison. `label == 1` means `traj_a` was preferred.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub label: u8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn traj(states: &[usize]) -> Trajectory {
        Trajectory::new(states.to_vec(), vec![0; states.len() - 1]).unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(50.0) > 1.0 - 1e-9);
        assert_abs_diff_eq!(sigmoid(4.0), 0.982_013_790_037_908_5, epsilon = 1e-12);
        for z in [-30.0, -2.5, -1e-8, 0.3, 7.0] {
            assert_eq!(sigmoid(z) + sigmoid(-z), 1.0);
        }
    }

    #[test]
    fn one_member_shift_on_one_state() {
        // two states, one action; member 2 adds +1 on state 1
        let ens = RewardEnsemble::from_members(1, vec![vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let a = traj(&[1, 0]);
        let b = traj(&[0, 0]);
        let u = preference_uncertainty(&ens, &a, &b);
        assert_abs_diff_eq!(u, sigmoid(1.0) - 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(u, 0.2311, epsilon = 1e-4);
        assert_eq!(preference_uncertainty(&ens, &b, &a), u);
        assert_eq!(preference_uncertainty(&ens, &a, &a), 0.0);
    }
}
