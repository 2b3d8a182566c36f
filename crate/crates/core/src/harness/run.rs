use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{AnchorMode, ExperimentConfig, Strategy};
use crate::elicitation::{
    build_candidate_policy_set, build_optimistic_candidate_policy_set, most_uncertain_rollout_pair, oracle_label,
    oracle_seed, random_candidate_pair, sample_uncertainty, sample_uniform, CandidatePolicySet, QueryPair,
};
use crate::envs::OfflineDataset;
use crate::error::{input_err, Error, Result};
use crate::mdp::{evaluate_policy, plan_optimal, Policy, TabularMdp, Trajectory};
use crate::models::{
    centered_reward_prior, fit_anchored_reward_ensemble, fit_transition_ensemble, MdpShape, PreferenceRecord, RewardEnsemble, TransitionEnsemble,
};
use crate::policy_opt::{pessimistic_policy, PessimismConfig};
use crate::rng::derive_seed;

/// Values defining the 0-100 scale: the uniform-random policy maps to 0 and
/// the optimal policy to 100.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub v_min: f64,
    pub v_opt: f64,
}

impl Anchors {
    pub fn for_env(env: &TabularMdp) -> Result<Self> {
        let (_, opt) = plan_optimal(env, None)?;
        let uniform = evaluate_policy(env, &Policy::for_mdp_uniform(env))?;
        let anchors = Self { v_min: uniform.value, v_opt: opt.value };
        if (anchors.v_opt - anchors.v_min).abs() < 1e-12 {
            return Err(Error::Config("optimal and uniform values coincide; cannot normalize".into()));
        }
        Ok(anchors)
    }

    /// Uniform-random value at the bottom, and at the top the true value of
    /// the policy pessimistic planning returns when given the true rewards.
    pub fn offline_optimal(env: &TabularMdp, transitions: &TransitionEnsemble, cfg: &PessimismConfig) -> Result<Self> {
        let truth = RewardEnsemble::from_members(env.num_actions(), vec![env.expected_reward_table()])?;
        let (policy, _) = pessimistic_policy(transitions, &truth, cfg)?;
        let v_opt = evaluate_policy(env, &policy)?.value;
        let v_min = evaluate_policy(env, &Policy::for_mdp_uniform(env))?.value;
        if v_opt - v_min < 1e-12 {
            return Err(Error::Config("offline-optimal value does not exceed the uniform policy's".into()));
        }
        Ok(Self { v_min, v_opt })
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (100.0 * (raw - self.v_min) / (self.v_opt - self.v_min)).clamp(0.0, 100.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsPoint {
    pub n_prefs: usize,
    pub raw_value: f64,
    pub normalized_return: f64,
}

/// One seed of the elicitation loop, advanced one query at a time so an
/// external labeler can drive it.
#[derive(Clone, Debug)]
pub struct ElicitationRun {
    cfg: ExperimentConfig,
    seed: u64,
    env: Arc<TabularMdp>,
    anchors: Anchors,
    dataset: OfflineDataset,
    buffer: Vec<Trajectory>,
    unfitted_online: Vec<Trajectory>,
    transitions: TransitionEnsemble,
    model: TabularMdp,
    reward_prior: Vec<Vec<f64>>,
    rewards: RewardEnsemble,
    candidates: Option<CandidatePolicySet>,
    records: Vec<PreferenceRecord>,
    pending: Option<QueryPair>,
    transition_refits: u64,
    policy: Policy,
    points: Vec<MetricsPoint>,
}

impl ElicitationRun {
    pub fn start(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let env = Arc::new(cfg.env.build());
        let anchors = Anchors::for_env(&env)?;
        Self::with_env(cfg, seed, env, anchors)
    }

    /// Starts a run on a prebuilt environment (shared across seeds) whose
    /// uniform/optimal anchors are already known.
    pub fn with_env(cfg: &ExperimentConfig, seed: u64, env: Arc<TabularMdp>, anchors: Anchors) -> Result<Self> {
        cfg.validate()?;
        let dataset = OfflineDataset::generate(cfg.env, &env, &cfg.dataset, derive_seed(seed, "dataset", 0))?;
        let shape = MdpShape::from(env.as_ref());
        let transitions = fit_transition_ensemble(
            &dataset.trajectories,
            &shape,
            &cfg.transition_fit,
            env.r_max(),
            derive_seed(seed, "transition-fit", 0),
        )?;
        let model = transitions.model_mdp();
        let anchors = match cfg.anchor_mode {
            AnchorMode::Optimal => anchors,
            AnchorMode::OfflineOptimal => {
                Anchors::offline_optimal(&env, &transitions, &PessimismConfig::new(cfg.lambda_t, cfg.lambda_r)?)?
            }
        };
        let prior_std = cfg.reward_prior_scale * env.r_max() / env.horizon() as f64;
        let reward_prior = centered_reward_prior(env.num_pairs(), cfg.reward_fit.n_members, prior_std, seed);
        let rewards = RewardEnsemble::from_members(env.num_actions(), reward_prior.clone())?;
        let buffer = dataset.trajectories.clone();
        let mut run = Self {
            cfg: cfg.clone(),
            seed,
            env,
            anchors,
            dataset,
            buffer,
            unfitted_online: Vec::new(),
            transitions,
            model,
            reward_prior,
            rewards,
            candidates: None,
            records: Vec::new(),
            pending: None,
            transition_refits: 0,
            policy: Policy::uniform(1, 1, 1),
            points: Vec::new(),
        };
        run.update_policy()?;
        Ok(run)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn env(&self) -> &TabularMdp {
        &self.env
    }
    pub fn anchors(&self) -> Anchors {
        self.anchors
    }
    pub fn dataset(&self) -> &OfflineDataset {
        &self.dataset
    }
    pub fn transitions(&self) -> &TransitionEnsemble {
        &self.transitions
    }
    pub fn rewards(&self) -> &RewardEnsemble {
        &self.rewards
    }
    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }
    pub fn policy(&self) -> &Policy {
        &self.policy
    }
    /// Metrics so far, starting with the zero-feedback point.
    pub fn points(&self) -> &[MetricsPoint] {
        &self.points
    }
    pub fn n_prefs(&self) -> usize {
        self.records.len()
    }
    pub fn is_done(&self) -> bool {
        self.records.len() >= self.cfg.budget
    }
    pub fn pending(&self) -> Option<&QueryPair> {
        self.pending.as_ref()
    }

    /// The query awaiting a label, generating it if needed. Its ordinal is
    /// [`Self::n_prefs`].
    pub fn next_query(&mut self) -> Result<&QueryPair> {
        if self.is_done() {
            return Err(Error::Input("preference budget exhausted".into()));
        }
        if self.pending.is_none() {
            let q = self.generate_query()?;
            self.pending = Some(q);
        }
        Ok(self.pending.as_ref().expect("just set"))
    }

    fn generate_query(&mut self) -> Result<QueryPair> {
        let ordinal = self.records.len() as u64;
        let qseed = derive_seed(self.seed, "query", ordinal);
        let cfg = &self.cfg;
        match cfg.strategy {
            Strategy::OprlUniform => sample_uniform(&self.dataset.trajectories, qseed),
            Strategy::OprlUncertainty => {
                sample_uncertainty(&self.dataset.trajectories, &self.rewards, cfg.n_candidates, qseed)
            }
            Strategy::SimOprl => {
                let lambda = if cfg.ablations.no_rollout_pessimism { 0.0 } else { cfg.lambda_t };
                let set = self
                    .candidates
                    .get_or_insert_with(|| build_candidate_policy_set(&self.transitions, &self.rewards, lambda));
                let mut pair = if cfg.ablations.no_optimism {
                    random_candidate_pair(&self.model, set, &self.rewards, qseed)
                } else {
                    most_uncertain_rollout_pair(&self.model, set, &self.rewards, cfg.rollouts_per_policy, qseed).0
                };
                pair.strategy = cfg.strategy.as_str().into();
                Ok(pair)
            }
            Strategy::Pbop => {
                let lambda = if cfg.ablations.no_rollout_pessimism { 0.0 } else { cfg.lambda_t };
                let set = self.candidates.get_or_insert_with(|| {
                    build_optimistic_candidate_policy_set(&self.transitions, &self.rewards, lambda)
                });
                let (mut pair, trajs) = if cfg.ablations.no_optimism {
                    let p = random_candidate_pair(&self.env, set, &self.rewards, qseed);
                    let t = vec![p.traj_a.clone(), p.traj_b.clone()];
                    (p, t)
                } else {
                    most_uncertain_rollout_pair(&self.env, set, &self.rewards, cfg.rollouts_per_policy, qseed)
                };
                self.unfitted_online.extend(trajs);
                pair.strategy = cfg.strategy.as_str().into();
                Ok(pair)
            }
        }
    }

    /// Records the label for the pending query. At batch boundaries (and
    /// when the budget is reached) models are refit and the new metrics point
    /// is returned.
    pub fn submit_label(&mut self, label: u8) -> Result<Option<MetricsPoint>> {
        if label > 1 {
            return input_err(format!("label must be 0 or 1, got {label}"));
        }
        let Some(pair) = self.pending.take() else {
            return input_err("no pending query");
        };
        self.records.push(PreferenceRecord { traj_a: pair.traj_a, traj_b: pair.traj_b, label });
        let n = self.records.len();
        if n % self.cfg.batch_size == 0 || n == self.cfg.budget {
            self.refit()?;
            return Ok(self.points.last().copied());
        }
        Ok(None)
    }

    /// Label the synthetic oracle gives to the pending query.
    pub fn oracle_answer(&self) -> Result<u8> {
        let Some(pair) = &self.pending else {
            return input_err("no pending query");
        };
        oracle_label(&self.env, pair, self.cfg.oracle, oracle_seed(self.seed, self.records.len() as u64))
    }

    /// Drives the run to its budget with the synthetic oracle.
    pub fn run_with_oracle(&mut self) -> Result<()> {
        while !self.is_done() {
            self.next_query()?;
            let label = self.oracle_answer()?;
            self.submit_label(label)?;
        }
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let (n_states, n_actions) = (self.env.num_states(), self.env.num_actions());
        self.rewards = fit_anchored_reward_ensemble(
            &self.records,
            n_states,
            n_actions,
            &self.cfg.reward_fit,
            &self.reward_prior,
            derive_seed(self.seed, "reward-fit", self.records.len() as u64),
        )?;
        if !self.unfitted_online.is_empty() {
            self.refit_transitions()?;
        }
        self.candidates = None;
        self.update_policy()
    }

    fn refit_transitions(&mut self) -> Result<()> {
        self.buffer.append(&mut self.unfitted_online);
        self.transition_refits += 1;
        self.transitions = fit_transition_ensemble(
            &self.buffer,
            &MdpShape::from(self.env.as_ref()),
            &self.cfg.transition_fit,
            self.env.r_max(),
            derive_seed(self.seed, "transition-fit", self.transition_refits),
        )?;
        self.model = self.transitions.model_mdp();
        Ok(())
    }

    fn update_policy(&mut self) -> Result<()> {
        let cfg = if self.cfg.ablations.no_output_pessimism {
            PessimismConfig { lambda_t: 0.0, lambda_r: 0.0 }
        } else {
            PessimismConfig::new(self.cfg.lambda_t, self.cfg.lambda_r)?
        };
        let (policy, _) = pessimistic_policy(&self.transitions, &self.rewards, &cfg)?;
        let raw = evaluate_policy(&self.env, &policy)?.value;
        self.points.push(MetricsPoint {
            n_prefs: self.records.len(),
            raw_value: raw,
            normalized_return: self.anchors.normalize(raw),
        });
        self.policy = policy;
        Ok(())
    }
}
