//! Finite-horizon tabular MDPs: representation, exact evaluation and planning
//! by backward induction, and stochastic rollouts.
//!
//! Rewards are attached to states and collected on *entering* a state, so a
//! trajectory `s0 -a0-> s1 -a1-> s2` earns `r(s1) + r(s2)`. The expected
//! one-step reward used for planning is `R(s, a) = sum_s' T(s'|s,a) r(s')`.
//! Planning can instead be driven by an explicit `(s, a)` reward table, which
//! is how learned (and penalized) reward models enter.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::rng::{rng_from_seed, Rng};

/// Tolerance for probability-vector normalization checks.
pub const PROB_TOL: f64 = 1e-9;

/// Ties in the greedy action choice are resolved towards the lowest index
/// unless a later action is better by more than this.
const TIE_TOL: f64 = 1e-12;

#[inline]
pub fn sa_index(num_actions: usize, s: usize, a: usize) -> usize {
    s * num_actions + a
}

/// A distribution over successor states stored as a uniform floor plus sparse
/// extra mass: `P(s') = floor + entries[s']`.
///
/// True environment rows have `floor == 0`; count-based estimates with
/// additive smoothing have a small positive floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub floor: f64,
    /// Sorted by state index, no duplicates, all masses positive.
    pub entries: Vec<(usize, f64)>,
}

impl TransitionRow {
    pub fn point(state: usize) -> Self {
        Self { floor: 0.0, entries: vec![(state, 1.0)] }
    }

    pub fn uniform(num_states: usize) -> Self {
        Self { floor: 1.0 / num_states as f64, entries: Vec::new() }
    }

    /// Builds a row from `(state, mass)` pairs, merging duplicates and
    /// dropping non-positive masses.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<(usize, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|&(s, _)| s);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (s, p) in entries {
            match merged.last_mut() {
                Some((last, mass)) if *last == s => *mass += p,
                _ => merged.push((s, p)),
            }
        }
        merged.retain(|&(_, p)| p > 0.0);
        Self { floor: 0.0, entries: merged }
    }

    pub fn from_dense(probs: &[f64]) -> Self {
        Self::from_pairs(probs.iter().copied().enumerate())
    }

    pub fn prob(&self, state: usize) -> f64 {
        let extra = self
            .entries
            .binary_search_by_key(&state, |&(s, _)| s)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0);
        self.floor + extra
    }

    pub fn total_mass(&self, num_states: usize) -> f64 {
        self.floor * num_states as f64 + self.entries.iter().map(|&(_, p)| p).sum::<f64>()
    }

    pub fn to_dense(&self, num_states: usize) -> Vec<f64> {
        let mut v = vec![self.floor; num_states];
        for &(s, p) in &self.entries {
            v[s] += p;
        }
        v
    }

    /// `sum_s' P(s') values[s']`, given `values_sum = sum_s' values[s']`.
    #[inline]
    pub fn expectation(&self, values: &[f64], values_sum: f64) -> f64 {
        let sparse: f64 = self.entries.iter().map(|&(s, p)| p * values[s]).sum();
        self.floor * values_sum + sparse
    }

    pub fn sample(&self, num_states: usize, rng: &mut Rng) -> usize {
        let mut u: f64 = rng.gen();
        let floor_mass = self.floor * num_states as f64;
        if u < floor_mass {
            return ((u / self.floor) as usize).min(num_states - 1);
        }
        u -= floor_mass;
        for &(s, p) in &self.entries {
            if u < p {
                return s;
            }
            u -= p;
        }
        self.entries.last().map(|&(s, _)| s).unwrap_or(num_states - 1)
    }

    /// Exact L1 distance between two rows over `num_states` successors.
    pub fn l1_distance(&self, other: &Self, num_states: usize) -> f64 {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        let mut union = 0usize;
        let mut dist = 0.0;
        while i < a.len() || j < b.len() {
            let (pa, pb);
            if j >= b.len() || (i < a.len() && a[i].0 < b[j].0) {
                pa = a[i].1;
                pb = 0.0;
                i += 1;
            } else if i >= a.len() || b[j].0 < a[i].0 {
                pa = 0.0;
                pb = b[j].1;
                j += 1;
            } else {
                pa = a[i].1;
                pb = b[j].1;
                i += 1;
                j += 1;
            }
            union += 1;
            dist += ((self.floor + pa) - (other.floor + pb)).abs();
        }
        dist + (num_states - union) as f64 * (self.floor - other.floor).abs()
    }

    /// Element-wise mean of several rows.
    pub fn mean(rows: &[&TransitionRow]) -> Self {
        let n = rows.len() as f64;
        let floor = rows.iter().map(|r| r.floor).sum::<f64>() / n;
        let pairs = rows.iter().flat_map(|r| r.entries.iter().map(move |&(s, p)| (s, p / n)));
        Self { floor, ..Self::from_pairs(pairs) }
    }
}

/// A finite-horizon MDP with state-entry rewards and a fixed start state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    /// Row for `(s, a)` at `s * num_actions + a`.
    transitions: Vec<TransitionRow>,
    state_reward: Vec<f64>,
    /// Bonus for the state occupied when the horizon is reached.
    final_reward: Vec<f64>,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        transitions: Vec<TransitionRow>,
        state_reward: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let mdp = Self {
            num_states,
            num_actions,
            horizon,
            initial_state,
            transitions,
            state_reward,
            final_reward: vec![0.0; num_states],
            terminal,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn with_final_reward(mut self, final_reward: Vec<f64>) -> Result<Self> {
        self.final_reward = final_reward;
        self.validate()?;
        Ok(self)
    }

    /// Same structure with a replaced transition table.
    pub fn with_transitions(&self, transitions: Vec<TransitionRow>) -> Result<Self> {
        let mdp = Self { transitions, ..self.clone() };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn with_state_reward(&self, state_reward: Vec<f64>) -> Result<Self> {
        let mdp = Self { state_reward, ..self.clone() };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = (self.num_states, self.num_actions);
        if n == 0 || m == 0 || self.horizon == 0 {
            return input_err("num_states, num_actions and horizon must be positive");
        }
        if self.initial_state >= n {
            return input_err(format!("initial state {} out of range", self.initial_state));
        }
        if self.transitions.len() != n * m {
            return input_err(format!(
                "transition table has {} rows, expected {}",
                self.transitions.len(),
                n * m
            ));
        }
        if self.state_reward.len() != n || self.final_reward.len() != n || self.terminal.len() != n {
            return input_err("reward/terminal tables must have one entry per state");
        }
        for (idx, row) in self.transitions.iter().enumerate() {
            let (s, a) = (idx / m, idx % m);
            if row.floor < 0.0 || row.entries.iter().any(|&(t, p)| t >= n || p < 0.0) {
                return input_err(format!("row ({s},{a}) has negative mass or bad index"));
            }
            let mass = row.total_mass(n);
            if (mass - 1.0).abs() > PROB_TOL {
                return input_err(format!("row ({s},{a}) sums to {mass}"));
            }
            if self.terminal[s] && (row.prob(s) - 1.0).abs() > PROB_TOL {
                return input_err(format!("terminal state {s} must self-loop under action {a}"));
            }
        }
        if self.terminal.iter().zip(&self.final_reward).any(|(&t, &r)| t && r != 0.0) {
            return input_err("terminal states cannot carry a final bonus");
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }
    pub fn transition(&self, s: usize, a: usize) -> &TransitionRow {
        &self.transitions[sa_index(self.num_actions, s, a)]
    }
    pub fn transitions(&self) -> &[TransitionRow] {
        &self.transitions
    }
    pub fn state_reward(&self) -> &[f64] {
        &self.state_reward
    }
    pub fn final_reward(&self) -> &[f64] {
        &self.final_reward
    }
    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }
    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    /// `R(s, a) = sum_s' T(s'|s,a) r(s')`, zero on terminal states.
    pub fn expected_reward_table(&self) -> Vec<f64> {
        let rsum: f64 = self.state_reward.iter().sum();
        (0..self.num_pairs())
            .map(|idx| {
                if self.terminal[idx / self.num_actions] {
                    0.0
                } else {
                    self.transitions[idx].expectation(&self.state_reward, rsum)
                }
            })
            .collect()
    }

    /// Reward scale used by the model-uncertainty penalties: the optimal
    /// value of `|r|` (plus `|final bonus|`) from the initial state.
    pub fn r_max(&self) -> f64 {
        self.abs_values()[0][self.initial_state]
    }

    /// Upper bound on the magnitude of any policy's value from any state and
    /// time: the optimal value of `|r|` maximized over start states.
    pub fn value_magnitude_bound(&self) -> f64 {
        self.abs_values().iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Largest `|V|` any policy can reach from any state and time when the
    /// one-step rewards are `rewards[s * A + a]` (plus the final bonus).
    pub fn magnitude_bound_with_reward(&self, rewards: &[f64]) -> Result<f64> {
        self.check_reward_table(rewards)?;
        let abs: Vec<f64> = rewards.iter().map(|r| r.abs()).collect();
        let abs_final = self.final_reward.iter().map(|r| r.abs()).collect();
        let abs_mdp = Self { final_reward: abs_final, ..self.clone() };
        let values = backward_optimal(&abs_mdp, &abs).1;
        Ok(values.iter().flatten().copied().fold(0.0, f64::max))
    }

    /// Largest `|r(s')| + |V_{t+1}(s')|` over successor states and times:
    /// what one transition can be worth in total.
    pub fn entry_value_bound(&self) -> f64 {
        let values = self.abs_values();
        (1..=self.horizon)
            .flat_map(|t| (0..self.num_states).map(move |s| (t, s)))
            .map(|(t, s)| self.state_reward[s].abs() + values[t][s])
            .fold(0.0, f64::max)
    }

    fn abs_values(&self) -> Vec<Vec<f64>> {
        let abs = self.state_reward.iter().map(|r| r.abs()).collect::<Vec<_>>();
        let abs_final = self.final_reward.iter().map(|r| r.abs()).collect::<Vec<_>>();
        let abs_mdp = Self { state_reward: abs, final_reward: abs_final, ..self.clone() };
        let rewards = abs_mdp.expected_reward_table();
        backward_optimal(&abs_mdp, &rewards).1
    }

    fn check_reward_table(&self, rewards: &[f64]) -> Result<()> {
        if rewards.len() != self.num_pairs() {
            return input_err(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                self.num_pairs()
            ));
        }
        Ok(())
    }
}

/// One episode: `states.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return input_err(format!(
                "trajectory has {} states and {} actions",
                states.len(),
                actions.len()
            ));
        }
        Ok(Self { states, actions })
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// The `(s_t, a_t)` pairs for `t < len`.
    pub fn state_actions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.states.iter().copied().zip(self.actions.iter().copied())
    }

    /// `(s_t, a_t, s_{t+1})` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.state_actions().zip(self.states.iter().skip(1)).map(|((s, a), &n)| (s, a, n))
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return input_err("trajectory length mismatch");
        }
        if self.len() > mdp.horizon() {
            return input_err(format!("trajectory longer than horizon {}", mdp.horizon()));
        }
        if let Some(&s) = self.states.iter().find(|&&s| s >= mdp.num_states()) {
            return input_err(format!("state {s} out of range"));
        }
        if let Some(&a) = self.actions.iter().find(|&&a| a >= mdp.num_actions()) {
            return input_err(format!("action {a} out of range"));
        }
        let last = *self.states.last().expect("non-empty states");
        if self.len() < mdp.horizon() && !mdp.is_terminal(last) {
            return input_err("trajectory ended early without reaching a terminal state");
        }
        Ok(())
    }
}

/// A time-dependent stochastic policy `pi[t][s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(horizon: usize, num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * num_states * num_actions {
            return input_err("policy table has the wrong size");
        }
        for row in probs.chunks(num_actions) {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                return input_err(format!("policy row {row:?} is not a probability vector"));
            }
        }
        Ok(Self { horizon, num_states, num_actions, probs })
    }

    /// `actions[t * num_states + s]` is the action taken at `(t, s)`.
    pub fn deterministic(horizon: usize, num_states: usize, num_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != horizon * num_states || actions.iter().any(|&a| a >= num_actions) {
            return input_err("deterministic policy table has the wrong size or action range");
        }
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (i, &a) in actions.iter().enumerate() {
            probs[i * num_actions + a] = 1.0;
        }
        Ok(Self { horizon, num_states, num_actions, probs })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self { horizon, num_states, num_actions, probs: vec![p; horizon * num_states * num_actions] }
    }

    /// The same state-conditional rows at every time step.
    pub fn stationary(horizon: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        let probs = (0..horizon).flat_map(|_| rows.iter().flatten().copied()).collect();
        Self::from_probs(horizon, num_states, num_actions, probs)
    }

    pub fn for_mdp_uniform(mdp: &TabularMdp) -> Self {
        Self::uniform(mdp.horizon(), mdp.num_states(), mdp.num_actions())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn probs(&self, t: usize, s: usize) -> &[f64] {
        let start = (t * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// Most likely action at `(t, s)`, lowest index on ties.
    pub fn greedy_action(&self, t: usize, s: usize) -> usize {
        argmax(self.probs(t, s))
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// `(1 - eps) * self + eps * uniform`.
    pub fn mix_with_uniform(&self, eps: f64) -> Self {
        let u = eps / self.num_actions as f64;
        let probs = self.probs.iter().map(|&p| (1.0 - eps) * p + u).collect();
        Self { probs, ..self.clone() }
    }

    pub fn sample_action(&self, t: usize, s: usize, rng: &mut Rng) -> usize {
        let row = self.probs(t, s);
        let mut u: f64 = rng.gen();
        for (a, &p) in row.iter().enumerate() {
            if u < p {
                return a;
            }
            u -= p;
        }
        // rounding leftovers go to the last action with positive mass
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn check_dims(&self, mdp: &TabularMdp) -> Result<()> {
        if self.horizon != mdp.horizon() || self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return input_err(format!(
                "policy shape (H={}, S={}, A={}) does not match MDP (H={}, S={}, A={})",
                self.horizon,
                self.num_states,
                self.num_actions,
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            ));
        }
        Ok(())
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOL {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub value: f64,
    /// `V[t][s]` for `t` in `0..=H`.
    pub per_state_values: Option<Vec<Vec<f64>>>,
}

/// Sum of entry rewards along the trajectory, plus the final bonus when the
/// full horizon was played.
pub fn trajectory_return(mdp: &TabularMdp, traj: &Trajectory) -> Result<f64> {
    traj.validate(mdp)?;
    Ok(trajectory_return_unchecked(mdp, traj))
}

pub(crate) fn trajectory_return_unchecked(mdp: &TabularMdp, traj: &Trajectory) -> f64 {
    let mut ret: f64 = traj.states[1..].iter().map(|&s| mdp.state_reward[s]).sum();
    if traj.len() == mdp.horizon {
        ret += mdp.final_reward[*traj.states.last().expect("non-empty")];
    }
    ret
}

/// Exact expected return of `policy` under the MDP's own rewards.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &Policy) -> Result<ValueReport> {
    evaluate_policy_with_reward(mdp, policy, &mdp.expected_reward_table())
}

/// Exact expected return when the one-step reward of `(s, a)` is
/// `rewards[s * A + a]` (the final bonus still applies).
pub fn evaluate_policy_with_reward(mdp: &TabularMdp, policy: &Policy, rewards: &[f64]) -> Result<ValueReport> {
    policy.check_dims(mdp)?;
    mdp.check_reward_table(rewards)?;
    let (n, m, h) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut values = vec![Vec::new(); h + 1];
    values[h] = mdp.final_reward.clone();
    for t in (0..h).rev() {
        let next = &values[t + 1];
        let next_sum: f64 = next.iter().sum();
        let cur = (0..n)
            .map(|s| {
                if mdp.terminal[s] {
                    return 0.0;
                }
                policy
                    .probs(t, s)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(a, &p)| {
                        let idx = sa_index(m, s, a);
                        p * (rewards[idx] + mdp.transitions[idx].expectation(next, next_sum))
                    })
                    .sum()
            })
            .collect();
        values[t] = cur;
    }
    Ok(ValueReport { value: values[0][mdp.initial_state], per_state_values: Some(values) })
}

/// Optimal deterministic time-dependent policy by backward induction.
///
/// `reward_override`, when given, replaces the expected one-step reward table.
pub fn plan_optimal(mdp: &TabularMdp, reward_override: Option<&[f64]>) -> Result<(Policy, ValueReport)> {
    let owned;
    let rewards = match reward_override {
        Some(r) => {
            mdp.check_reward_table(r)?;
            r
        }
        None => {
            owned = mdp.expected_reward_table();
            &owned
        }
    };
    let (actions, values) = backward_optimal(mdp, rewards);
    let policy = Policy::deterministic(mdp.horizon, mdp.num_states, mdp.num_actions, &actions)?;
    Ok((policy, ValueReport { value: values[0][mdp.initial_state], per_state_values: Some(values) }))
}

/// Q-values `Q[t][s * A + a]` of the optimal policy for the given rewards.
pub fn optimal_q_values(mdp: &TabularMdp, rewards: &[f64]) -> Result<Vec<Vec<f64>>> {
    mdp.check_reward_table(rewards)?;
    let (_, values) = backward_optimal(mdp, rewards);
    let m = mdp.num_actions;
    Ok((0..mdp.horizon)
        .map(|t| {
            let next = &values[t + 1];
            let next_sum: f64 = next.iter().sum();
            (0..mdp.num_pairs())
                .map(|idx| {
                    if mdp.terminal[idx / m] {
                        0.0
                    } else {
                        rewards[idx] + mdp.transitions[idx].expectation(next, next_sum)
                    }
                })
                .collect()
        })
        .collect())
}

fn backward_optimal(mdp: &TabularMdp, rewards: &[f64]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let (n, m, h) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut values = vec![Vec::new(); h + 1];
    values[h] = mdp.final_reward.clone();
    let mut actions = vec![0usize; h * n];
    let mut q = vec![0.0; m];
    for t in (0..h).rev() {
        let next = &values[t + 1];
        let next_sum: f64 = next.iter().sum();
        let mut cur = vec![0.0; n];
        for s in 0..n {
            if mdp.terminal[s] {
                continue;
            }
            for (a, qa) in q.iter_mut().enumerate() {
                let idx = sa_index(m, s, a);
                *qa = rewards[idx] + mdp.transitions[idx].expectation(next, next_sum);
            }
            let best = argmax(&q);
            actions[t * n + s] = best;
            cur[s] = q[best];
        }
        values[t] = cur;
    }
    (actions, values)
}

/// State-action occupancy `d_t(s, a)` for `t < H` (flattened `s * A + a`).
/// Mass that has entered a terminal state stops contributing.
pub fn occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    policy.check_dims(mdp)?;
    let (n, m) = (mdp.num_states, mdp.num_actions);
    let mut mu = vec![0.0; n];
    mu[mdp.initial_state] = 1.0;
    let mut out = Vec::with_capacity(mdp.horizon);
    for t in 0..mdp.horizon {
        let mut d = vec![0.0; n * m];
        let mut next = vec![0.0; n];
        let mut floor_mass = 0.0;
        for s in 0..n {
            if mu[s] == 0.0 {
                continue;
            }
            if mdp.terminal[s] {
                next[s] += mu[s];
                continue;
            }
            for (a, &p) in policy.probs(t, s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let w = mu[s] * p;
                let idx = sa_index(m, s, a);
                d[idx] = w;
                let row = &mdp.transitions[idx];
                floor_mass += w * row.floor;
                for &(sn, q) in &row.entries {
                    next[sn] += w * q;
                }
            }
        }
        if floor_mass != 0.0 {
            next.iter_mut().for_each(|x| *x += floor_mass);
        }
        out.push(d);
        mu = next;
    }
    Ok(out)
}

pub fn rollout(mdp: &TabularMdp, policy: &Policy, rng_seed: u64) -> Result<Trajectory> {
    policy.check_dims(mdp)?;
    Ok(rollout_with(mdp, policy, mdp.initial_state, &mut rng_from_seed(rng_seed)))
}

/// Samples one episode starting from `start`, stopping early on terminal states.
pub fn rollout_with(mdp: &TabularMdp, policy: &Policy, start: usize, rng: &mut Rng) -> Trajectory {
    let mut states = Vec::with_capacity(mdp.horizon + 1);
    let mut actions = Vec::with_capacity(mdp.horizon);
    let mut s = start;
    states.push(s);
    for t in 0..mdp.horizon {
        if mdp.terminal[s] {
            break;
        }
        let a = policy.sample_action(t, s, rng);
        s = mdp.transition(s, a).sample(mdp.num_states, rng);
        actions.push(a);
        states.push(s);
    }
    Trajectory { states, actions }
}
