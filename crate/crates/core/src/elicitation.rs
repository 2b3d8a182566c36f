//! Query generation strategies and the synthetic preference oracle.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::mdp::{plan_optimal, rollout_with, trajectory_return_unchecked, Policy, TabularMdp, Trajectory};
use crate::models::{sa_return, sigmoid, RewardEnsemble, TransitionEnsemble};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPair {
    pub traj_a: Trajectory,
    pub traj_b: Trajectory,
    pub strategy: String,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl QueryPair {
    fn new(traj_a: Trajectory, traj_b: Trajectory, strategy: &str) -> Self {
        Self { traj_a, traj_b, strategy: strategy.to_string(), diagnostics: BTreeMap::new() }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Bernoulli,
    Deterministic,
}

/// Labels a pair with the true returns: Bradley-Terry sampling, or a hard
/// comparison with fair coin flips on ties. Returns 1 when `traj_a` wins.
pub fn oracle_label(true_mdp: &TabularMdp, pair: &QueryPair, mode: OracleMode, rng_seed: u64) -> Result<u8> {
    pair.traj_a.validate(true_mdp)?;
    pair.traj_b.validate(true_mdp)?;
    let diff = trajectory_return_unchecked(true_mdp, &pair.traj_a) - trajectory_return_unchecked(true_mdp, &pair.traj_b);
    let mut rng = rng_from_seed(rng_seed);
    let p = match mode {
        OracleMode::Bernoulli => sigmoid(diff),
        OracleMode::Deterministic if diff > 0.0 => 1.0,
        OracleMode::Deterministic if diff < 0.0 => 0.0,
        OracleMode::Deterministic => 0.5,
    };
    Ok(u8::from(rng.gen::<f64>() < p))
}

fn check_pool(trajectories: &[Trajectory]) -> Result<()> {
    if trajectories.len() < 2 {
        return input_err(format!("need at least 2 trajectories to form a pair, got {}", trajectories.len()));
    }
    Ok(())
}

fn draw_pair(n: usize, rng: &mut Rng) -> (usize, usize) {
    let idx = sample_indices(rng, n, 2);
    (idx.index(0), idx.index(1))
}

/// Two distinct dataset trajectories drawn uniformly.
pub fn sample_uniform(trajectories: &[Trajectory], rng_seed: u64) -> Result<QueryPair> {
    check_pool(trajectories)?;
    let (i, j) = draw_pair(trajectories.len(), &mut rng_from_seed(rng_seed));
    Ok(QueryPair::new(trajectories[i].clone(), trajectories[j].clone(), "oprl_uniform")
        .with("index_a", i as f64)
        .with("index_b", j as f64))
}

/// Per-member returns of a trajectory.
fn member_returns(rewards: &RewardEnsemble, traj: &Trajectory) -> Vec<f64> {
    let m = rewards.num_actions();
    rewards.members().iter().map(|r| sa_return(traj, r, m)).collect()
}

fn pair_uncertainty(a: &[f64], b: &[f64]) -> f64 {
    let probs = a.iter().zip(b).map(|(x, y)| sigmoid(x - y));
    crate::models::spread(probs)
}

/// The most preference-uncertain of `n_candidates` uniformly drawn pairs.
/// Ties keep the earliest candidate.
pub fn sample_uncertainty(
    trajectories: &[Trajectory],
    rewards: &RewardEnsemble,
    n_candidates: usize,
    rng_seed: u64,
) -> Result<QueryPair> {
    check_pool(trajectories)?;
    if n_candidates == 0 {
        return input_err("n_candidates must be at least 1");
    }
    let mut rng = rng_from_seed(rng_seed);
    let mut best = (0, 0, f64::NEG_INFINITY);
    let mut total = 0.0;
    for _ in 0..n_candidates {
        let (i, j) = draw_pair(trajectories.len(), &mut rng);
        let u = pair_uncertainty(&member_returns(rewards, &trajectories[i]), &member_returns(rewards, &trajectories[j]));
        total += u;
        if u > best.2 {
            best = (i, j, u);
        }
    }
    let (i, j, u) = best;
    Ok(QueryPair::new(trajectories[i].clone(), trajectories[j].clone(), "oprl_uncertainty")
        .with("u_pr", u)
        .with("pool_mean_u_pr", total / n_candidates as f64)
        .with("index_a", i as f64)
        .with("index_b", j as f64))
}

/// One plausibly-optimal policy per reward-ensemble member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePolicySet {
    pub policies: Vec<Policy>,
    /// Reward member each policy was planned for.
    pub members: Vec<usize>,
}

/// Plans in the estimated model for each member reward `R_i + coef * u_T`.
fn candidate_set(model: &TabularMdp, transitions: &TransitionEnsemble, rewards: &RewardEnsemble, coef: f64) -> CandidatePolicySet {
    let u_t = transitions.u_t();
    let policies = rewards
        .members()
        .iter()
        .map(|r| {
            let shaped: Vec<f64> = r.iter().zip(u_t).map(|(ri, ui)| ri + coef * ui).collect();
            plan_optimal(model, Some(&shaped)).expect("shapes agree").0
        })
        .collect();
    CandidatePolicySet { policies, members: (0..rewards.members().len()).collect() }
}

/// Policies optimal for each member reward penalized by `lambda_t * u_T`,
/// planned in the estimated transition model.
pub fn build_candidate_policy_set(transitions: &TransitionEnsemble, rewards: &RewardEnsemble, lambda_t: f64) -> CandidatePolicySet {
    candidate_set(&transitions.model_mdp(), transitions, rewards, -lambda_t)
}

/// Policies optimal for each member reward plus `lambda_t * u_T`, planned in
/// the estimated transition model.
pub fn build_optimistic_candidate_policy_set(
    transitions: &TransitionEnsemble,
    rewards: &RewardEnsemble,
    lambda_t: f64,
) -> CandidatePolicySet {
    candidate_set(&transitions.model_mdp(), transitions, rewards, lambda_t)
}

/// Rolls out every candidate `rollouts_per_policy` times in `env` and returns
/// the cross-policy pair with the highest preference uncertainty, together
/// with all generated trajectories. With a single candidate, pairs of its own
/// rollouts are used and the result is flagged as degenerate.
pub fn most_uncertain_rollout_pair(
    env: &TabularMdp,
    set: &CandidatePolicySet,
    rewards: &RewardEnsemble,
    rollouts_per_policy: usize,
    rng_seed: u64,
) -> (QueryPair, Vec<Trajectory>) {
    let mut rng = rng_from_seed(rng_seed);
    let k = rollouts_per_policy.max(1);
    let mut trajs = Vec::with_capacity(set.policies.len() * k);
    let mut owner = Vec::with_capacity(set.policies.len() * k);
    for (p, policy) in set.policies.iter().enumerate() {
        for _ in 0..k {
            trajs.push(rollout_with(env, policy, env.initial_state(), &mut rng));
            owner.push(p);
        }
    }
    let returns: Vec<Vec<f64>> = trajs.iter().map(|t| member_returns(rewards, t)).collect();
    let single = set.policies.len() == 1;
    let mut best = (0, usize::from(trajs.len() > 1), f64::NEG_INFINITY);
    for i in 0..trajs.len() {
        for j in i + 1..trajs.len() {
            if owner[i] == owner[j] && !single {
                continue;
            }
            let u = pair_uncertainty(&returns[i], &returns[j]);
            if u > best.2 {
                best = (i, j, u);
            }
        }
    }
    let (i, j, u) = best;
    let pair = QueryPair::new(trajs[i].clone(), trajs[j].clone(), "")
        .with("u_pr", u.max(0.0))
        .with("policy_a", set.members[owner[i]] as f64)
        .with("policy_b", set.members[owner[j]] as f64)
        .with("degenerate", if single { 1.0 } else { 0.0 });
    (pair, trajs)
}

/// Two distinct candidates chosen at random with one rollout each: the
/// candidate set without the uncertainty-seeking selection.
pub fn random_candidate_pair(env: &TabularMdp, set: &CandidatePolicySet, rewards: &RewardEnsemble, rng_seed: u64) -> QueryPair {
    let mut rng = rng_from_seed(rng_seed);
    let n = set.policies.len();
    let (i, j) = if n >= 2 { draw_pair(n, &mut rng) } else { (0, 0) };
    let a = rollout_with(env, &set.policies[i], env.initial_state(), &mut rng);
    let b = rollout_with(env, &set.policies[j], env.initial_state(), &mut rng);
    let u = pair_uncertainty(&member_returns(rewards, &a), &member_returns(rewards, &b));
    QueryPair::new(a, b, "random_candidates")
        .with("u_pr", u)
        .with("policy_a", set.members[i] as f64)
        .with("policy_b", set.members[j] as f64)
}

/// Candidates planned pessimistically in the learned model and rolled out
/// inside it; returns the most preference-uncertain cross-policy pair.
pub fn sim_oprl_sample(
    transitions: &TransitionEnsemble,
    rewards: &RewardEnsemble,
    lambda_t: f64,
    rollouts_per_policy: usize,
    rng_seed: u64,
) -> QueryPair {
    let model = transitions.model_mdp();
    let set = candidate_set(&model, transitions, rewards, -lambda_t);
    let (mut pair, _) = most_uncertain_rollout_pair(&model, &set, rewards, rollouts_per_policy, rng_seed);
    pair.strategy = "sim_oprl".into();
    pair
}

/// Online variant: candidates planned optimistically (`R_i + lambda_t * u_T`)
/// and rolled out in the true environment. Also returns every generated
/// trajectory so the caller can grow its buffer and refit transitions.
pub fn pbop_sample(
    true_mdp: &TabularMdp,
    transitions: &TransitionEnsemble,
    rewards: &RewardEnsemble,
    lambda_t: f64,
    rollouts_per_policy: usize,
    rng_seed: u64,
) -> (QueryPair, Vec<Trajectory>) {
    let set = build_optimistic_candidate_policy_set(transitions, rewards, lambda_t);
    let (mut pair, trajs) = most_uncertain_rollout_pair(true_mdp, &set, rewards, rollouts_per_policy, rng_seed);
    pair.strategy = "pbop".into();
    (pair, trajs)
}

/// Seed for the `index`-th oracle call of a run.
pub fn oracle_seed(run_seed: u64, index: u64) -> u64 {
    derive_seed(run_seed, "oracle", index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::star;
    use crate::models::preference_uncertainty;

    fn pool() -> Vec<Trajectory> {
        star::scripted_trajectories(10, 2)
    }

    #[test]
    fn uniform_is_deterministic_and_distinct() {
        let p = pool();
        let a = sample_uniform(&p, 5).unwrap();
        assert_eq!(a, sample_uniform(&p, 5).unwrap());
        assert_ne!(a.diagnostics["index_a"], a.diagnostics["index_b"]);
        assert!(sample_uniform(&p[..1], 0).is_err());
    }

    #[test]
    fn uncertainty_with_one_member_takes_first_candidate() {
        let p = pool();
        let zero = RewardEnsemble::zero_prior(5, 4, 1);
        let q = sample_uncertainty(&p, &zero, 45, 3).unwrap();
        let mut rng = rng_from_seed(3);
        let (i, j) = draw_pair(p.len(), &mut rng);
        assert_eq!((q.diagnostics["index_a"], q.diagnostics["index_b"]), (i as f64, j as f64));
        assert_eq!(q.diagnostics["u_pr"], 0.0);
    }

    #[test]
    fn sim_oprl_reports_true_uncertainty() {
        let env = star::build_star_mdp();
        let data = star::scripted_trajectories(40, 1);
        let t = crate::models::fit_transition_ensemble(
            &data,
            &(&env).into(),
            &Default::default(),
            env.r_max(),
            0,
        )
        .unwrap();
        let mut members = vec![vec![0.0; 20]; 3];
        members[1][crate::mdp::sa_index(4, 1, 0)] = 2.0;
        members[2][crate::mdp::sa_index(4, 1, 3)] = 2.0;
        let r = RewardEnsemble::from_members(4, members).unwrap();
        let q = sim_oprl_sample(&t, &r, 0.5, 10, 8);
        assert_eq!(q.diagnostics["u_pr"], preference_uncertainty(&r, &q.traj_a, &q.traj_b));
        assert_ne!(q.diagnostics["policy_a"], q.diagnostics["policy_b"]);
    }
}
