//! Numerical checks of the guarantees the planner and models rely on.
//!
//! Every check is seeded and fast; [`run_theory_suite`] runs them all and is
//! what `oprl verify` prints.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::elicitation::{oracle_label, oracle_seed, OracleMode, QueryPair};
use crate::envs::counterexample;
use crate::error::Result;
use crate::mdp::{evaluate_policy, plan_optimal, Policy, TabularMdp, Trajectory, TransitionRow};
use crate::models::{preference_prob, sigmoid};
use crate::policy_opt::{
    random_calibrated_instance, random_mdp, random_policy, random_transitions, verify_pessimism_bound,
    verify_telescoping,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl TheoryCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

fn random_shape(rng: &mut Rng, max_states: usize, max_actions: usize, max_horizon: usize) -> (usize, usize, usize) {
    (rng.gen_range(2..=max_states), rng.gen_range(2..=max_actions), rng.gen_range(1..=max_horizon))
}

/// The value gap between a model and its perturbation never exceeds the
/// expected one-step L1 gap times the value scale.
pub fn check_telescoping(n_instances: usize, seed: u64) -> Result<TheoryCheck> {
    let mut rng = rng_from_seed(derive_seed(seed, "telescoping", 0));
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_instances {
        let (s, a, h) = random_shape(&mut rng, 5, 3, 4);
        let mdp = random_mdp(s, a, h, &mut rng);
        let perturbed = random_transitions(&mdp, &mut rng);
        let policy = random_policy(&mdp, &mut rng);
        let rep = verify_telescoping(&mdp, &perturbed, &policy)?;
        worst = worst.max(rep.value_gap - rep.bound);
        violations += usize::from(!rep.holds);
    }
    Ok(TheoryCheck::new(
        "telescoping",
        violations == 0,
        format!("{n_instances} triples, {violations} violations, max(lhs - rhs) = {worst:.3e}"),
    ))
}

/// The penalized-model value lower-bounds the true value whenever the
/// ensembles bracket the truth.
pub fn check_pessimism_bound(n_instances: usize, seed: u64) -> Result<TheoryCheck> {
    let mut rng = rng_from_seed(derive_seed(seed, "pessimism", 0));
    let (mut uncalibrated, mut violations) = (0, 0);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n_instances {
        let (s, a, h) = random_shape(&mut rng, 6, 3, 4);
        let k = rng.gen_range(2..=5);
        let (mdp, t, r) = random_calibrated_instance(s, a, h, k, &mut rng);
        let rep = verify_pessimism_bound(&mdp, &t, &r, 20, derive_seed(seed, "pessimism-policies", i as u64))?;
        uncalibrated += usize::from(!rep.calibrated);
        violations += rep.violations;
        worst = worst.max(rep.max_violation);
    }
    Ok(TheoryCheck::new(
        "pessimism_bound",
        uncalibrated == 0 && violations == 0,
        format!(
            "{n_instances} instances x 20 policies, {uncalibrated} uncalibrated, {violations} violations, \
             max(penalized - true) = {worst:.3e}"
        ),
    ))
}

fn one_step_policy(action: usize) -> Policy {
    Policy::deterministic(1, 3, 2, &[action, 0, 0]).expect("valid action")
}

/// The one-step example where transition pessimism alone picks the worse
/// action and pessimism in both models ties the two.
pub fn check_counterexample() -> Result<TheoryCheck> {
    let env = counterexample::build_counterexample_mdp();
    let fx = counterexample::fixture();
    let (_, optimal) = plan_optimal(&env, None)?;

    let worst_case = fx.worst_case_model();
    let (offline_policy, _) = plan_optimal(&worst_case, None)?;
    let offline_value = evaluate_policy(&env, &offline_policy)?.value;

    let penalized_model = worst_case.with_state_reward(fx.pessimistic_state_reward())?;
    let penalized: Vec<f64> =
        (0..2).map(|a| evaluate_policy(&penalized_model, &one_step_policy(a)).map(|r| r.value)).collect::<Result<_>>()?;

    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;
    let passed = close(optimal.value, 0.8)
        && offline_policy.greedy_action(0, 0) == 1
        && close(offline_value, 0.4)
        && penalized.iter().all(|&v| close(v, 0.0));
    Ok(TheoryCheck::new(
        "counterexample",
        passed,
        format!(
            "optimal {:.3}, offline pessimistic picks a{} worth {:.3}, penalized values {:.3} / {:.3}",
            optimal.value,
            offline_policy.greedy_action(0, 0),
            offline_value,
            penalized[0],
            penalized[1]
        ),
    ))
}

/// Best expected return from `s` at step `t`, searching every action at
/// every node of the history tree.
fn search_tree(mdp: &TabularMdp, s: usize, t: usize) -> f64 {
    if t == mdp.horizon() {
        return mdp.final_reward()[s];
    }
    if mdp.is_terminal(s) {
        return 0.0;
    }
    let n = mdp.num_states();
    (0..mdp.num_actions())
        .map(|a| {
            let row: &TransitionRow = mdp.transition(s, a);
            (0..n)
                .map(|next| {
                    let p = row.prob(next);
                    if p == 0.0 {
                        0.0
                    } else {
                        p * (mdp.state_reward()[next] + search_tree(mdp, next, t + 1))
                    }
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best value over every deterministic time-dependent policy, when there
/// are few enough of them to list.
fn best_listed_policy(mdp: &TabularMdp, limit: usize) -> Result<Option<f64>> {
    let (h, n, m) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let slots = h * n;
    let count = (m as f64).powi(slots as i32);
    if count > limit as f64 {
        return Ok(None);
    }
    let mut actions = vec![0usize; slots];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(evaluate_policy(mdp, &Policy::deterministic(h, n, m, &actions)?)?.value);
        let mut i = 0;
        while i < slots && actions[i] + 1 == m {
            actions[i] = 0;
            i += 1;
        }
        if i == slots {
            return Ok(Some(best));
        }
        actions[i] += 1;
    }
}

/// Backward induction against brute force on small random MDPs.
pub fn check_planner(n_instances: usize, seed: u64) -> Result<TheoryCheck> {
    let mut rng = rng_from_seed(derive_seed(seed, "planner", 0));
    let (mut mismatches, mut listed) = (0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..n_instances {
        let (s, a, h) = random_shape(&mut rng, 5, 4, 3);
        let mdp = random_mdp(s, a, h, &mut rng);
        let (policy, rep) = plan_optimal(&mdp, None)?;
        let own = evaluate_policy(&mdp, &policy)?.value;
        let searched = search_tree(&mdp, mdp.initial_state(), 0);
        let mut gap = (rep.value - searched).abs().max((own - searched).abs());
        if let Some(v) = best_listed_policy(&mdp, 1 << 14)? {
            listed += 1;
            gap = gap.max((rep.value - v).abs());
        }
        worst = worst.max(gap);
        mismatches += usize::from(gap > 1e-9);
    }
    Ok(TheoryCheck::new(
        "planner_exhaustive",
        mismatches == 0,
        format!(
            "{n_instances} MDPs (|S|<=5, |A|<=4, H<=3; {listed} also by listing every policy), \
             {mismatches} mismatches, max gap {worst:.3e}"
        ),
    ))
}

fn random_trajectory(rng: &mut Rng, num_states: usize, num_actions: usize, len: usize) -> Trajectory {
    let states = (0..=len).map(|_| rng.gen_range(0..num_states)).collect();
    let actions = (0..len).map(|_| rng.gen_range(0..num_actions)).collect();
    Trajectory::new(states, actions).expect("lengths agree")
}

/// `P(a > b) + P(b > a) == 1` and `P(a > a) == 0.5`, exactly.
pub fn check_bradley_terry(n_pairs: usize, seed: u64) -> Result<TheoryCheck> {
    let mut rng = rng_from_seed(derive_seed(seed, "bradley-terry", 0));
    let (n, m) = (6, 3);
    let mut failures = 0;
    for _ in 0..n_pairs {
        let scale = rng.gen_range(0.0..30.0);
        let rewards: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-scale..=scale)).collect();
        let (len_a, len_b) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let a = random_trajectory(&mut rng, n, m, len_a);
        let b = random_trajectory(&mut rng, n, m, len_b);
        let forward = preference_prob(&rewards, m, &a, &b);
        let backward = preference_prob(&rewards, m, &b, &a);
        let ok = forward + backward == 1.0 && preference_prob(&rewards, m, &a, &a) == 0.5;
        failures += usize::from(!ok);
    }
    let ok = failures == 0 && sigmoid(0.0) == 0.5;
    Ok(TheoryCheck::new(
        "bradley_terry_identities",
        ok,
        format!("{n_pairs} random pairs, {failures} failures, sigmoid(0) = {}", sigmoid(0.0)),
    ))
}

/// One step from `s0` into `s1` (reward `gap`) or `s2` (reward 0).
fn two_outcome_mdp(gap: f64) -> TabularMdp {
    let rows = vec![
        TransitionRow::point(1),
        TransitionRow::point(2),
        TransitionRow::point(1),
        TransitionRow::point(1),
        TransitionRow::point(2),
        TransitionRow::point(2),
    ];
    TabularMdp::new(3, 2, 1, 0, rows, vec![0.0, gap, 0.0], vec![false; 3]).expect("well formed")
}

/// Empirical oracle frequencies against `sigmoid(return gap)`.
pub fn check_oracle_frequency(n_draws: usize, seed: u64) -> Result<TheoryCheck> {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, gap) in [0.0, 1.0, 4.0].into_iter().enumerate() {
        let mdp = two_outcome_mdp(gap);
        let pair = QueryPair {
            traj_a: Trajectory::new(vec![0, 1], vec![0])?,
            traj_b: Trajectory::new(vec![0, 2], vec![1])?,
            strategy: "fixed".into(),
            diagnostics: Default::default(),
        };
        let base = derive_seed(seed, "oracle-frequency", k as u64);
        let mut wins = 0usize;
        for i in 0..n_draws {
            wins += usize::from(oracle_label(&mdp, &pair, OracleMode::Bernoulli, oracle_seed(base, i as u64))?);
        }
        let freq = wins as f64 / n_draws as f64;
        let err = (freq - sigmoid(gap)).abs();
        worst = worst.max(err);
        parts.push(format!("gap {gap}: {freq:.4} vs {:.4}", sigmoid(gap)));
    }
    Ok(TheoryCheck::new(
        "oracle_frequency",
        worst <= 0.02,
        format!("{n_draws} draws each; {}; max error {worst:.4}", parts.join(", ")),
    ))
}

/// Every check at its standard size.
pub fn run_theory_suite(seed: u64) -> Result<Vec<TheoryCheck>> {
    Ok(vec![
        check_telescoping(1000, seed)?,
        check_pessimism_bound(100, seed)?,
        check_counterexample()?,
        check_planner(200, seed)?,
        check_bradley_terry(10_000, seed)?,
        check_oracle_frequency(10_000, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_search_matches_a_hand_computed_value() {
        let mdp = two_outcome_mdp(3.0);
        assert_eq!(search_tree(&mdp, 0, 0), 3.0);
        assert_eq!(best_listed_policy(&mdp, 100).unwrap(), Some(3.0));
        assert_eq!(best_listed_policy(&random_mdp(5, 4, 3, &mut rng_from_seed(0)), 100).unwrap(), None);
    }

    #[test]
    fn small_suite_passes() {
        for check in [
            check_telescoping(50, 1).unwrap(),
            check_pessimism_bound(5, 1).unwrap(),
            check_counterexample().unwrap(),
            check_planner(20, 1).unwrap(),
            check_bradley_terry(200, 1).unwrap(),
        ] {
            assert!(check.passed, "{check:?}");
        }
    }
}
