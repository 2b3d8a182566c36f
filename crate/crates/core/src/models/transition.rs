use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::mdp::{sa_index, TabularMdp, Trajectory, TransitionRow};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng as _;

/// What a learner knows about an environment without its dynamics or
/// rewards: sizes, horizon, start state and which states end an episode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdpShape {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub terminal: Vec<bool>,
}

impl From<&TabularMdp> for MdpShape {
    fn from(m: &TabularMdp) -> Self {
        Self {
            num_states: m.num_states(),
            num_actions: m.num_actions(),
            horizon: m.horizon(),
            initial_state: m.initial_state(),
            terminal: m.terminal_mask().to_vec(),
        }
    }
}

impl MdpShape {
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionFitParams {
    pub n_members: usize,
    pub bootstrap_frac: f64,
    /// Pseudo-count added to every successor of an observed pair.
    pub smoothing: f64,
}

impl Default for TransitionFitParams {
    fn default() -> Self {
        Self { n_members: 5, bootstrap_frac: 0.9, smoothing: 1e-3 }
    }
}

/// Bootstrapped count-based transition models.
///
/// `u_t[s, a]` is the largest L1 distance between two members' rows at
/// `(s, a)`, scaled by `r_max`. Pairs never observed in the full dataset get
/// the maximum `2 * r_max`; terminal states are known to absorb and get 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEnsemble {
    shape: MdpShape,
    members: Vec<Vec<TransitionRow>>,
    mle: Vec<TransitionRow>,
    u_t: Vec<f64>,
    r_max: f64,
    observed: Vec<bool>,
}

impl TransitionEnsemble {
    /// Assembles an ensemble from explicit member tables. When `observed` is
    /// `None` every pair counts as observed (no forced maximum).
    pub fn from_members(
        shape: MdpShape,
        members: Vec<Vec<TransitionRow>>,
        r_max: f64,
        observed: Option<Vec<bool>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return input_err("an ensemble needs at least one member");
        }
        let pairs = shape.num_pairs();
        for table in &members {
            if table.len() != pairs {
                return input_err("member transition table has the wrong size");
            }
            // reuse the MDP validation for row sums and ranges
            model_mdp_from(&shape, table.clone())?;
        }
        let observed = observed.unwrap_or_else(|| vec![true; pairs]);
        if observed.len() != pairs {
            return input_err("observed mask has the wrong size");
        }
        let n = shape.num_states;
        let mut mle = Vec::with_capacity(pairs);
        let mut u_t = Vec::with_capacity(pairs);
        for idx in 0..pairs {
            let rows: Vec<&TransitionRow> = members.iter().map(|m| &m[idx]).collect();
            mle.push(TransitionRow::mean(&rows));
            let s = idx / shape.num_actions;
            let u = if shape.terminal[s] {
                0.0
            } else if !observed[idx] {
                2.0 * r_max
            } else {
                let mut worst = 0.0f64;
                for i in 0..rows.len() {
                    for j in i + 1..rows.len() {
                        worst = worst.max(rows[i].l1_distance(rows[j], n));
                    }
                }
                worst * r_max
            };
            u_t.push(u);
        }
        Ok(Self { shape, members, mle, u_t, r_max, observed })
    }

    pub fn shape(&self) -> &MdpShape {
        &self.shape
    }
    pub fn members(&self) -> &[Vec<TransitionRow>] {
        &self.members
    }
    pub fn mle(&self) -> &[TransitionRow] {
        &self.mle
    }
    pub fn mle_row(&self, s: usize, a: usize) -> &TransitionRow {
        &self.mle[sa_index(self.shape.num_actions, s, a)]
    }
    pub fn u_t(&self) -> &[f64] {
        &self.u_t
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    /// The point-estimate model with zero rewards, for planning with an
    /// explicit reward table and for simulated rollouts.
    pub fn model_mdp(&self) -> TabularMdp {
        model_mdp_from(&self.shape, self.mle.clone()).expect("member rows were validated")
    }
}

fn model_mdp_from(shape: &MdpShape, rows: Vec<TransitionRow>) -> Result<TabularMdp> {
    TabularMdp::new(
        shape.num_states,
        shape.num_actions,
        shape.horizon,
        shape.initial_state,
        rows,
        vec![0.0; shape.num_states],
        shape.terminal.clone(),
    )
}

/// Fits `params.n_members` count-based models, each on a bootstrap resample
/// (with replacement) of the observed transitions.
pub fn fit_transition_ensemble(
    trajectories: &[Trajectory],
    shape: &MdpShape,
    params: &TransitionFitParams,
    r_max: f64,
    rng_seed: u64,
) -> Result<TransitionEnsemble> {
    if params.n_members < 2 {
        return input_err("a transition ensemble needs at least two members");
    }
    if !(params.bootstrap_frac > 0.0 && params.bootstrap_frac <= 1.0) {
        return input_err("bootstrap_frac must be in (0, 1]");
    }
    let (n, m) = (shape.num_states, shape.num_actions);
    let mut data: Vec<(usize, usize)> = Vec::new();
    for traj in trajectories {
        for (s, a, next) in traj.transitions() {
            if s >= n || a >= m || next >= n {
                return input_err(format!("transition ({s},{a},{next}) out of range"));
            }
            if !shape.terminal[s] {
                data.push((sa_index(m, s, a), next));
            }
        }
    }
    if data.is_empty() {
        return input_err("cannot fit transitions on an empty dataset");
    }
    let mut observed = vec![false; shape.num_pairs()];
    for &(idx, _) in &data {
        observed[idx] = true;
    }
    let sample_size = ((params.bootstrap_frac * data.len() as f64).round() as usize).max(1);
    let members = (0..params.n_members)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(rng_seed, "transition-bootstrap", k as u64));
            let mut sample: Vec<(usize, usize)> =
                (0..sample_size).map(|_| data[rng.gen_range(0..data.len())]).collect();
            sample.sort_unstable();
            count_model(shape, &sample, params.smoothing)
        })
        .collect();
    TransitionEnsemble::from_members(shape.clone(), members, r_max, Some(observed))
}

/// Smoothed maximum-likelihood rows from sorted `(pair, successor)` samples.
fn count_model(shape: &MdpShape, sorted: &[(usize, usize)], smoothing: f64) -> Vec<TransitionRow> {
    let n = shape.num_states;
    let mut rows: Vec<TransitionRow> = (0..shape.num_pairs())
        .map(|idx| {
            let s = idx / shape.num_actions;
            if shape.terminal[s] {
                TransitionRow::point(s)
            } else {
                TransitionRow::uniform(n)
            }
        })
        .collect();
    for group in sorted.chunk_by(|x, y| x.0 == y.0) {
        let idx = group[0].0;
        let total = group.len() as f64 + smoothing * n as f64;
        let counts = group.chunk_by(|x, y| x.1 == y.1).map(|g| (g[0].1, g.len() as f64 / total));
        rows[idx] = TransitionRow { floor: smoothing / total, ..TransitionRow::from_pairs(counts) };
    }
    rows
}
