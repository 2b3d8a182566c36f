//! Five-state star-shaped MDP: a hub `s1` connected to a start state and three
//! leaves with rewards 6, -1 and 10.

use crate::mdp::{Policy, TabularMdp, TransitionRow};
use crate::rng::{rng_from_seed, Rng};
use crate::mdp;

pub const NUM_STATES: usize = 5;
pub const NUM_ACTIONS: usize = 4;
pub const HORIZON: usize = 3;
pub const MOVE_PROB: f64 = 0.9;
pub const REWARDS: [f64; NUM_STATES] = [0.0, 0.0, 6.0, -1.0, 10.0];

/// `(from, action, to)` for every drawn arrow.
const ARROWS: [(usize, usize, usize); 8] = [
    (0, 0, 1),
    (1, 1, 0),
    (1, 0, 2),
    (2, 1, 1),
    (1, 3, 3),
    (3, 2, 1),
    (1, 2, 4),
    (4, 3, 1),
];

pub fn build_star_mdp() -> TabularMdp {
    let mut rows = vec![None; NUM_STATES * NUM_ACTIONS];
    for &(s, a, to) in &ARROWS {
        rows[s * NUM_ACTIONS + a] = Some(TransitionRow::from_pairs([(to, MOVE_PROB), (s, 1.0 - MOVE_PROB)]));
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(idx, row)| row.unwrap_or_else(|| TransitionRow::point(idx / NUM_ACTIONS)))
        .collect();
    TabularMdp::new(NUM_STATES, NUM_ACTIONS, HORIZON, 0, rows, REWARDS.to_vec(), vec![false; NUM_STATES])
        .expect("star MDP is well formed")
}

/// Stationary scripted behavior: `s0 -a0-> s1 -a3-> s3 -a2-> s1`, which only
/// ever visits `{s0, s1, s3}`.
fn script_via_bottom() -> Policy {
    scripted(&[(0, 0), (1, 3), (3, 2)])
}

/// Stationary scripted behavior from `s3`: `s3 -a2-> s1 -a0-> s2 -a1-> s1`,
/// visiting only `{s3, s1, s2}`.
fn script_via_right() -> Policy {
    scripted(&[(3, 2), (1, 0), (2, 1)])
}

fn scripted(choices: &[(usize, usize)]) -> Policy {
    let rows: Vec<Vec<f64>> = (0..NUM_STATES)
        .map(|s| {
            let a = choices.iter().find(|&&(cs, _)| cs == s).map_or(0, |&(_, a)| a);
            (0..NUM_ACTIONS).map(|b| if b == a { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    Policy::stationary(HORIZON, &rows).expect("valid scripted policy")
}

/// The hand-designed offline dataset: alternating episodes of the two scripts,
/// realized through the true (stochastic) dynamics. The second script starts
/// in `s3` rather than the environment's start state.
pub fn scripted_trajectories(n_episodes: usize, rng_seed: u64) -> Vec<mdp::Trajectory> {
    let env = build_star_mdp();
    let (a, b) = (script_via_bottom(), script_via_right());
    let mut rng: Rng = rng_from_seed(rng_seed);
    (0..n_episodes)
        .map(|i| {
            if i % 2 == 0 {
                mdp::rollout_with(&env, &a, 0, &mut rng)
            } else {
                mdp::rollout_with(&env, &b, 3, &mut rng)
            }
        })
        .collect()
}

pub fn state_label(s: usize) -> String {
    format!("s{s}")
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::HashSet;

    #[test]
    fn arrows_have_point_nine() {
        let m = build_star_mdp();
        assert_abs_diff_eq!(m.transition(1, 2).prob(4), 0.9);
        assert_abs_diff_eq!(m.transition(1, 2).prob(1), 0.1, epsilon = 1e-15);
        assert_eq!(m.transition(2, 0).prob(2), 1.0);
        for row in m.transitions() {
            assert_abs_diff_eq!(row.total_mass(NUM_STATES), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scripted_data_covers_only_listed_states() {
        let trajs = scripted_trajectories(40, 11);
        assert_eq!(trajs.len(), 40);
        for (i, t) in trajs.iter().enumerate() {
            let allowed: HashSet<usize> = if i % 2 == 0 { [0, 1, 3].into() } else { [3, 1, 2].into() };
            assert!(t.states.iter().all(|s| allowed.contains(s)), "{t:?}");
            assert_eq!(t.len(), HORIZON);
        }
        let pairs: HashSet<(usize, usize)> = trajs.iter().flat_map(|t| t.state_actions()).collect();
        assert!(!pairs.contains(&(1, 2)));
        assert!(pairs.contains(&(1, 3)));
    }
}
