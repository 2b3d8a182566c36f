use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsOptions};
use super::{spread, PreferenceRecord};
use crate::error::{input_err, Result};
use crate::mdp::sa_index;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardFitParams {
    pub n_members: usize,
    pub bootstrap_frac: f64,
    /// Weight of `||theta||^2` added to the mean negative log-likelihood.
    pub l2: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for RewardFitParams {
    fn default() -> Self {
        Self { n_members: 5, bootstrap_frac: 0.9, l2: 1e-4, max_iters: 2000, grad_tol: 1e-5 }
    }
}

/// Per-`(s, a)` reward tables fitted on bootstrap resamples of the
/// preference data. `u_r` is the member spread per pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEnsemble {
    num_actions: usize,
    members: Vec<Vec<f64>>,
    mle: Vec<f64>,
    u_r: Vec<f64>,
}

impl RewardEnsemble {
    pub fn from_members(num_actions: usize, members: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return input_err("an ensemble needs at least one member");
        };
        let pairs = first.len();
        if num_actions == 0 || pairs % num_actions != 0 {
            return input_err("reward table length is not a multiple of the action count");
        }
        if members.iter().any(|m| m.len() != pairs || m.iter().any(|r| !r.is_finite())) {
            return input_err("reward members must be finite tables of equal length");
        }
        let k = members.len() as f64;
        let mle = (0..pairs).map(|i| members.iter().map(|m| m[i]).sum::<f64>() / k).collect();
        let u_r = (0..pairs).map(|i| spread(members.iter().map(|m| m[i]))).collect();
        Ok(Self { num_actions, members, mle, u_r })
    }

    /// The ensemble used before any feedback: all members zero.
    pub fn zero_prior(num_states: usize, num_actions: usize, n_members: usize) -> Self {
        Self::from_members(num_actions, vec![vec![0.0; num_states * num_actions]; n_members.max(1)])
            .expect("zero tables are valid")
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }
    pub fn mle(&self) -> &[f64] {
        &self.mle
    }
    pub fn u_r(&self) -> &[f64] {
        &self.u_r
    }
}

/// Sparse `counts(traj_a) - counts(traj_b)` over `(s, a)` indices.
fn count_difference(rec: &PreferenceRecord, num_actions: usize) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = rec
        .traj_a
        .state_actions()
        .map(|(s, a)| (sa_index(num_actions, s, a), 1.0))
        .chain(rec.traj_b.state_actions().map(|(s, a)| (sa_index(num_actions, s, a), -1.0)))
        .collect();
    d.sort_by_key(|&(i, _)| i);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(d.len());
    for (i, v) in d {
        match merged.last_mut() {
            Some((j, w)) if *j == i => *w += v,
            _ => merged.push((i, v)),
        }
    }
    merged.retain(|&(_, v)| v != 0.0);
    merged
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Random per-member reward tables with standard deviation `std`, centered so
/// that their mean is zero in every coordinate. Used as regularization
/// anchors, they keep members apart on pairs no preference has touched.
pub fn centered_reward_prior(num_pairs: usize, n_members: usize, std: f64, rng_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(derive_seed(rng_seed, "reward-prior", 0));
    let normal = rand_distr::Normal::new(0.0, std.max(0.0)).expect("finite std");
    let mut tables: Vec<Vec<f64>> =
        (0..n_members).map(|_| (0..num_pairs).map(|_| rng.sample(normal)).collect()).collect();
    if n_members > 1 {
        for i in 0..num_pairs {
            let mean = tables.iter().map(|t| t[i]).sum::<f64>() / n_members as f64;
            for t in &mut tables {
                t[i] -= mean;
            }
        }
    }
    tables
}

/// Bradley-Terry maximum likelihood with L2 regularization toward zero, one
/// member per bootstrap resample of the records.
pub fn fit_reward_ensemble(
    prefs: &[PreferenceRecord],
    num_states: usize,
    num_actions: usize,
    params: &RewardFitParams,
    rng_seed: u64,
) -> Result<RewardEnsemble> {
    let anchors = vec![vec![0.0; num_states * num_actions]; params.n_members];
    fit_anchored_reward_ensemble(prefs, num_states, num_actions, params, &anchors, rng_seed)
}

/// As [`fit_reward_ensemble`], regularizing member `k` toward `anchors[k]`
/// instead of zero.
pub fn fit_anchored_reward_ensemble(
    prefs: &[PreferenceRecord],
    num_states: usize,
    num_actions: usize,
    params: &RewardFitParams,
    anchors: &[Vec<f64>],
    rng_seed: u64,
) -> Result<RewardEnsemble> {
    if prefs.is_empty() {
        return input_err("cannot fit rewards without preferences");
    }
    if params.n_members < 2 {
        return input_err("a reward ensemble needs at least two members");
    }
    if !(params.bootstrap_frac > 0.0 && params.bootstrap_frac <= 1.0) {
        return input_err("bootstrap_frac must be in (0, 1]");
    }
    let pairs = num_states * num_actions;
    if anchors.len() != params.n_members || anchors.iter().any(|a| a.len() != pairs) {
        return input_err("need one anchor table of length |S|*|A| per member");
    }
    let mut features = Vec::with_capacity(prefs.len());
    for rec in prefs {
        if rec.label > 1 {
            return input_err(format!("label must be 0 or 1, got {}", rec.label));
        }
        let in_range = |t: &crate::mdp::Trajectory| {
            t.states.iter().all(|&s| s < num_states) && t.actions.iter().all(|&a| a < num_actions)
        };
        if !in_range(&rec.traj_a) || !in_range(&rec.traj_b) {
            return input_err("preference trajectory indices out of range");
        }
        features.push((count_difference(rec, num_actions), rec.label == 1));
    }
    let sample_size = ((params.bootstrap_frac * prefs.len() as f64).round() as usize).max(1);
    let members = (0..params.n_members)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(rng_seed, "reward-bootstrap", k as u64));
            let sample: Vec<usize> = (0..sample_size).map(|_| rng.gen_range(0..prefs.len())).collect();
            fit_member(&features, &sample, &anchors[k], params)
        })
        .collect();
    RewardEnsemble::from_members(num_actions, members)
}

fn fit_member(features: &[(Vec<(usize, f64)>, bool)], sample: &[usize], anchor: &[f64], params: &RewardFitParams) -> Vec<f64> {
    // Coordinates never touched by the sample stay at the regularized optimum,
    // their anchor.
    let pairs = anchor.len();
    let mut slot = vec![usize::MAX; pairs];
    let mut active = Vec::new();
    let mut rows: Vec<(Vec<(usize, f64)>, bool)> = Vec::with_capacity(sample.len());
    for &i in sample {
        let (diff, preferred_a) = &features[i];
        let compact = diff
            .iter()
            .map(|&(idx, v)| {
                if slot[idx] == usize::MAX {
                    slot[idx] = active.len();
                    active.push(idx);
                }
                (slot[idx], v)
            })
            .collect();
        rows.push((compact, *preferred_a));
    }
    let center: Vec<f64> = active.iter().map(|&i| anchor[i]).collect();
    let mut theta = center.clone();
    if !active.is_empty() {
        let scale = 1.0 / rows.len() as f64;
        let opts = LbfgsOptions { max_iters: params.max_iters, grad_tol: params.grad_tol, memory: 10 };
        minimize(&mut theta, &opts, |x, grad| {
            let mut loss = 0.0;
            for ((g, &xi), &ci) in grad.iter_mut().zip(x).zip(&center) {
                *g = 2.0 * params.l2 * (xi - ci);
                loss += params.l2 * (xi - ci) * (xi - ci);
            }
            for (diff, preferred_a) in &rows {
                let z: f64 = diff.iter().map(|&(j, v)| x[j] * v).sum();
                // -log P(label): softplus(-z) if a won, softplus(z) otherwise
                let (l, dz) = if *preferred_a {
                    (softplus(-z), -super::sigmoid(-z))
                } else {
                    (softplus(z), super::sigmoid(z))
                };
                loss += scale * l;
                for &(j, v) in diff {
                    grad[j] += scale * dz * v;
                }
            }
            loss
        });
    }
    let mut table = anchor.to_vec();
    for (idx, v) in active.into_iter().zip(theta) {
        table[idx] = v;
    }
    table
}
