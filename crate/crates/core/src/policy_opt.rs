//! Pessimistic policy extraction, plus numerical checks of the guarantees
//! behind it (simulation-lemma bound and the pessimism lower bound).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    evaluate_policy, evaluate_policy_with_reward, occupancy, plan_optimal, Policy, TabularMdp, TransitionRow, ValueReport,
};
use crate::models::{MdpShape, RewardEnsemble, TransitionEnsemble};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PessimismConfig {
    pub lambda_t: f64,
    pub lambda_r: f64,
}

impl PessimismConfig {
    pub fn new(lambda_t: f64, lambda_r: f64) -> Result<Self> {
        if !(lambda_t >= 0.0 && lambda_r >= 0.0) {
            return Err(Error::Config(format!("penalty weights must be non-negative, got {lambda_t} and {lambda_r}")));
        }
        Ok(Self { lambda_t, lambda_r })
    }
}

/// `R_hat - lambda_r * u_R - lambda_t * u_T` per `(s, a)`.
pub fn penalized_reward(transitions: &TransitionEnsemble, rewards: &RewardEnsemble, cfg: &PessimismConfig) -> Vec<f64> {
    rewards
        .mle()
        .iter()
        .zip(rewards.u_r())
        .zip(transitions.u_t())
        .map(|((r, ur), ut)| r - cfg.lambda_r * ur - cfg.lambda_t * ut)
        .collect()
}

/// Optimal policy of the estimated model under the penalized reward. The
/// value is the penalized model's own estimate.
pub fn pessimistic_policy(
    transitions: &TransitionEnsemble,
    rewards: &RewardEnsemble,
    cfg: &PessimismConfig,
) -> Result<(Policy, ValueReport)> {
    plan_optimal(&transitions.model_mdp(), Some(&penalized_reward(transitions, rewards, cfg)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PessimismReport {
    /// Whether the ensembles cover the truth (`|T - T_hat|_1 * B <= u_T` and
    /// `|R - R_hat| <= u_R` everywhere), which the bound requires.
    pub calibrated: bool,
    pub n_policies: usize,
    pub violations: usize,
    /// Largest `V_penalized - V_true` seen (negative when the bound holds with slack).
    pub max_violation: f64,
}

impl PessimismReport {
    pub fn holds(&self) -> bool {
        self.calibrated && self.violations == 0
    }
}

const BOUND_TOL: f64 = 1e-9;

/// Checks `V(T_hat, R_hat - u_T - u_R) <= V(T, R)` for random policies.
pub fn verify_pessimism_bound(
    true_mdp: &TabularMdp,
    transitions: &TransitionEnsemble,
    rewards: &RewardEnsemble,
    n_policies: usize,
    rng_seed: u64,
) -> Result<PessimismReport> {
    let true_reward = true_mdp.expected_reward_table();
    let bound = true_mdp.magnitude_bound_with_reward(&true_reward)?;
    let n = true_mdp.num_states();
    let mut calibrated = true;
    for idx in 0..true_mdp.num_pairs() {
        if true_mdp.is_terminal(idx / true_mdp.num_actions()) {
            continue;
        }
        let gap = true_mdp.transitions()[idx].l1_distance(&transitions.mle()[idx], n);
        calibrated &= gap * bound <= transitions.u_t()[idx] + BOUND_TOL;
        calibrated &= (true_reward[idx] - rewards.mle()[idx]).abs() <= rewards.u_r()[idx] + BOUND_TOL;
    }
    let model = true_mdp.with_transitions(transitions.mle().to_vec())?;
    let penalized = penalized_reward(transitions, rewards, &PessimismConfig { lambda_t: 1.0, lambda_r: 1.0 });
    let mut rng = rng_from_seed(rng_seed);
    let mut violations = 0;
    let mut max_violation = f64::NEG_INFINITY;
    for _ in 0..n_policies {
        let policy = random_policy(true_mdp, &mut rng);
        let v_model = evaluate_policy_with_reward(&model, &policy, &penalized)?.value;
        let v_true = evaluate_policy_with_reward(true_mdp, &policy, &true_reward)?.value;
        let excess = v_model - v_true;
        max_violation = max_violation.max(excess);
        if excess > BOUND_TOL {
            violations += 1;
        }
    }
    Ok(PessimismReport { calibrated, n_policies, violations, max_violation })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelescopingReport {
    /// `V(T) - V(T_hat)`.
    pub value_gap: f64,
    /// `E_{d(T_hat)}[sum_t |T - T_hat|_1(s_t, a_t)] * B`.
    pub bound: f64,
    pub holds: bool,
}

/// Both sides of the simulation-lemma bound, computed exactly with the
/// state rewards shared by both models. `B` bounds `|r(s') + V(s')|` for any
/// policy in the true model.
pub fn verify_telescoping(true_mdp: &TabularMdp, perturbed: &[TransitionRow], policy: &Policy) -> Result<TelescopingReport> {
    let model = true_mdp.with_transitions(perturbed.to_vec())?;
    let v_true = evaluate_policy(true_mdp, policy)?.value;
    let v_model = evaluate_policy(&model, policy)?.value;
    let scale = true_mdp.entry_value_bound();
    let n = true_mdp.num_states();
    let gaps: Vec<f64> = true_mdp.transitions().iter().zip(perturbed).map(|(t, p)| t.l1_distance(p, n)).collect();
    let expected_gap: f64 = occupancy(&model, policy)?
        .iter()
        .map(|d| d.iter().zip(&gaps).map(|(w, g)| w * g).sum::<f64>())
        .sum();
    let value_gap = v_true - v_model;
    let bound = expected_gap * scale;
    Ok(TelescopingReport { value_gap, bound, holds: value_gap <= bound + BOUND_TOL })
}

/// A random probability vector with a few exact zeros.
fn random_simplex(len: usize, rng: &mut Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen::<f64>() }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..len)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Random time-dependent stochastic policy; deterministic half of the time.
pub fn random_policy(mdp: &TabularMdp, rng: &mut Rng) -> Policy {
    let (h, n, m) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    if rng.gen_bool(0.5) {
        let actions: Vec<usize> = (0..h * n).map(|_| rng.gen_range(0..m)).collect();
        return Policy::deterministic(h, n, m, &actions).expect("valid actions");
    }
    let probs = (0..h * n).flat_map(|_| random_simplex(m, rng)).collect();
    Policy::from_probs(h, n, m, probs).expect("rows sum to one")
}

/// Random MDP with rewards in `[-1, 1]`, occasionally with a terminal state.
pub fn random_mdp(num_states: usize, num_actions: usize, horizon: usize, rng: &mut Rng) -> TabularMdp {
    let mut terminal = vec![false; num_states];
    if num_states > 2 && rng.gen_bool(0.3) {
        terminal[num_states - 1] = true;
    }
    let rows = (0..num_states * num_actions)
        .map(|idx| {
            let s = idx / num_actions;
            if terminal[s] {
                TransitionRow::point(s)
            } else {
                TransitionRow::from_dense(&random_simplex(num_states, rng))
            }
        })
        .collect();
    let reward = (0..num_states).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let initial = rng.gen_range(0..num_states);
    TabularMdp::new(num_states, num_actions, horizon, initial, rows, reward, terminal).expect("random rows are valid")
}

/// Random transition table of the same shape as `mdp` (terminal rows kept).
pub fn random_transitions(mdp: &TabularMdp, rng: &mut Rng) -> Vec<TransitionRow> {
    let n = mdp.num_states();
    (0..mdp.num_pairs())
        .map(|idx| {
            if mdp.is_terminal(idx / mdp.num_actions()) {
                mdp.transitions()[idx].clone()
            } else {
                TransitionRow::from_dense(&random_simplex(n, rng))
            }
        })
        .collect()
}

/// Ensembles whose members bracket the truth: every true row and reward is
/// a convex combination of the members, and the transition ensemble uses the
/// true model's value bound as its reward scale.
pub fn random_calibrated_instance(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    n_members: usize,
    rng: &mut Rng,
) -> (TabularMdp, TransitionEnsemble, RewardEnsemble) {
    let mdp = random_mdp(num_states, num_actions, horizon, rng);
    let true_reward = mdp.expected_reward_table();
    let scale = mdp.magnitude_bound_with_reward(&true_reward).expect("shapes agree");
    let (members, reward_members) = bracketing_members(&mdp, &true_reward, n_members.max(2), rng);
    let t = TransitionEnsemble::from_members(MdpShape::from(&mdp), members, scale, None).expect("valid members");
    let r = RewardEnsemble::from_members(num_actions, reward_members).expect("valid members");
    (mdp, t, r)
}

fn bracketing_members(
    mdp: &TabularMdp,
    true_reward: &[f64],
    k: usize,
    rng: &mut Rng,
) -> (Vec<Vec<TransitionRow>>, Vec<Vec<f64>>) {
    let n = mdp.num_states();
    let mut tables = vec![Vec::with_capacity(mdp.num_pairs()); k];
    let mut rewards = vec![Vec::with_capacity(mdp.num_pairs()); k];
    for (idx, row) in mdp.transitions().iter().enumerate() {
        if mdp.is_terminal(idx / mdp.num_actions()) {
            tables.iter_mut().for_each(|t| t.push(row.clone()));
            rewards.iter_mut().for_each(|r| r.push(true_reward[idx]));
            continue;
        }
        let truth = row.to_dense(n);
        // Offsets are centered under random positive weights, so the
        // weighted member average is the truth but the plain mean is not.
        let others: Vec<Vec<f64>> = (0..k).map(|_| random_simplex(n, rng)).collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let center: Vec<f64> =
            (0..n).map(|j| others.iter().zip(&weights).map(|(o, w)| o[j] * w).sum::<f64>() / total).collect();
        let step = rng.gen_range(0.05..0.5);
        for (member, other) in others.iter().enumerate() {
            let dense: Vec<f64> = (0..n).map(|j| truth[j] + step * (other[j] - center[j])).collect();
            let dense = if dense.iter().all(|&p| p >= 0.0) { dense } else { truth.clone() };
            tables[member].push(TransitionRow::from_dense(&dense));
        }
        let spread = rng.gen_range(0.0..0.5);
        for (member, table) in rewards.iter_mut().enumerate() {
            let offset = if member % 2 == 0 { spread } else { -spread };
            table.push(true_reward[idx] + offset * rng.gen::<f64>());
        }
    }
    (tables, rewards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::counterexample;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_models_recover_the_true_optimum() {
        let env = crate::envs::star::build_star_mdp();
        let t = TransitionEnsemble::from_members(
            (&env).into(),
            vec![env.transitions().to_vec(), env.transitions().to_vec()],
            env.r_max(),
            None,
        )
        .unwrap();
        let r = RewardEnsemble::from_members(4, vec![env.expected_reward_table(); 2]).unwrap();
        let (pi, rep) = pessimistic_policy(&t, &r, &PessimismConfig::new(1.0, 1.0).unwrap()).unwrap();
        let (_, best) = plan_optimal(&env, None).unwrap();
        assert_abs_diff_eq!(rep.value, best.value, epsilon = 1e-12);
        assert_abs_diff_eq!(evaluate_policy(&env, &pi).unwrap().value, best.value, epsilon = 1e-12);
    }

    #[test]
    fn negative_weights_are_rejected() {
        assert!(PessimismConfig::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn one_step_bound_is_a_single_term() {
        let env = counterexample::build_counterexample_mdp();
        let est = counterexample::fixture().estimated_model();
        let policy = Policy::deterministic(1, 3, 2, &[0, 0, 0]).unwrap();
        let rep = verify_telescoping(&env, est.transitions(), &policy).unwrap();
        // |T - T_hat|_1 at (s0, a0) is 0.6 and rewards are within [0, 1]
        assert_abs_diff_eq!(rep.bound, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.value_gap, 0.3, epsilon = 1e-12);
        assert!(rep.holds);
    }

    #[test]
    fn calibrated_instances_satisfy_the_bound() {
        let mut rng = rng_from_seed(11);
        for _ in 0..10 {
            let (mdp, t, r) = random_calibrated_instance(4, 3, 3, 3, &mut rng);
            let rep = verify_pessimism_bound(&mdp, &t, &r, 20, 1).unwrap();
            assert!(rep.calibrated);
            assert_eq!(rep.violations, 0);
        }
    }
}
