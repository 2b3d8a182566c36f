use approx::assert_abs_diff_eq;
use oprl::envs::{counterexample, gridworld, sepsis, star, EnvId};
use oprl::mdp::{evaluate_policy, plan_optimal, rollout, rollout_with, trajectory_return};
use oprl::policy_opt::{random_mdp, random_policy};
use oprl::rng::rng_from_seed;
use oprl::{Policy, TabularMdp, Trajectory, TransitionRow};
use proptest::prelude::*;

fn traj(states: &[usize], actions: &[usize]) -> Trajectory {
    Trajectory::new(states.to_vec(), actions.to_vec()).unwrap()
}

#[test]
fn zero_rewards_give_zero_returns_and_values() {
    let mut rng = rng_from_seed(1);
    let base = random_mdp(4, 3, 3, &mut rng);
    let zero = base.with_state_reward(vec![0.0; 4]).unwrap();
    let t = rollout(&zero, &Policy::for_mdp_uniform(&zero), 3).unwrap();
    assert_eq!(trajectory_return(&zero, &t).unwrap(), 0.0);
    for _ in 0..10 {
        let p = random_policy(&zero, &mut rng);
        assert_eq!(evaluate_policy(&zero, &p).unwrap().value, 0.0);
    }
}

#[test]
fn star_return_through_the_ten_leaf() {
    let env = star::build_star_mdp();
    assert_eq!(trajectory_return(&env, &traj(&[0, 1, 4, 1], &[0, 2, 3])).unwrap(), 10.0);
}

#[test]
fn counterexample_return_and_values() {
    let env = counterexample::build_counterexample_mdp();
    assert_eq!(trajectory_return(&env, &traj(&[0, 1], &[0])).unwrap(), 1.0);
    let a0 = Policy::deterministic(1, 3, 2, &[0, 0, 0]).unwrap();
    assert_abs_diff_eq!(evaluate_policy(&env, &a0).unwrap().value, 0.8, epsilon = 1e-12);
}

/// Sums probability times return over every state sequence the policy can
/// produce, without backward induction.
fn path_enumeration_value(mdp: &TabularMdp, policy: &Policy) -> f64 {
    fn walk(mdp: &TabularMdp, policy: &Policy, t: usize, s: usize, prob: f64, ret: f64) -> f64 {
        if t == mdp.horizon() {
            return prob * (ret + mdp.final_reward()[s]);
        }
        if mdp.is_terminal(s) {
            return prob * ret;
        }
        let mut total = 0.0;
        for (a, &pa) in policy.probs(t, s).iter().enumerate() {
            for next in 0..mdp.num_states() {
                let p = mdp.transition(s, a).prob(next);
                if pa > 0.0 && p > 0.0 {
                    total += walk(mdp, policy, t + 1, next, prob * pa * p, ret + mdp.state_reward()[next]);
                }
            }
        }
        total
    }
    walk(mdp, policy, 0, mdp.initial_state(), 1.0, 0.0)
}

/// Expectimax over the full history tree.
fn expectimax(mdp: &TabularMdp, t: usize, s: usize) -> f64 {
    if t == mdp.horizon() {
        return mdp.final_reward()[s];
    }
    if mdp.is_terminal(s) {
        return 0.0;
    }
    (0..mdp.num_actions())
        .map(|a| {
            (0..mdp.num_states())
                .map(|n| {
                    let p = mdp.transition(s, a).prob(n);
                    if p > 0.0 {
                        p * (mdp.state_reward()[n] + expectimax(mdp, t + 1, n))
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn star_optimal_value_by_enumeration() {
    let env = star::build_star_mdp();
    let (pi, rep) = plan_optimal(&env, None).unwrap();
    assert_abs_diff_eq!(rep.value, path_enumeration_value(&env, &pi), epsilon = 1e-12);
    assert_abs_diff_eq!(rep.value, expectimax(&env, 0, 0), epsilon = 1e-12);
}

#[test]
fn single_state_single_action_value() {
    let env = TabularMdp::new(1, 1, 7, 0, vec![TransitionRow::point(0)], vec![1.5], vec![false]).unwrap();
    let (pi, rep) = plan_optimal(&env, None).unwrap();
    assert_eq!(pi.probs(3, 0), &[1.0]);
    assert_abs_diff_eq!(rep.value, 7.0 * 1.5, epsilon = 1e-12);
}

#[test]
fn deterministic_rollouts_ignore_the_seed() {
    let rows = vec![TransitionRow::point(1), TransitionRow::point(2), TransitionRow::point(0)];
    let env = TabularMdp::new(3, 1, 5, 0, rows, vec![0.0, 1.0, 2.0], vec![false; 3]).unwrap();
    let pi = Policy::for_mdp_uniform(&env);
    let expected = traj(&[0, 1, 2, 0, 1, 2], &[0; 5]);
    for seed in 0..20 {
        assert_eq!(rollout(&env, &pi, seed).unwrap(), expected);
    }
}

#[test]
fn star_first_move_succeeds_nine_times_in_ten() {
    let env = star::build_star_mdp();
    let always_a0 = Policy::deterministic(3, 5, 4, &[0; 15]).unwrap();
    let mut rng = rng_from_seed(42);
    let n = 10_000;
    let moved = (0..n).filter(|_| rollout_with(&env, &always_a0, 0, &mut rng).states[1] == 1).count();
    assert!((moved as f64 / n as f64 - 0.9).abs() <= 0.01, "{moved}");
}

fn monte_carlo_agrees(env: &TabularMdp, policy: &Policy, n: usize, seed: u64) {
    let exact = evaluate_policy(env, policy).unwrap().value;
    let mut rng = rng_from_seed(seed);
    let returns: Vec<f64> = (0..n)
        .map(|_| {
            let t = rollout_with(env, policy, env.initial_state(), &mut rng);
            trajectory_return(env, &t).unwrap()
        })
        .collect();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((exact - mean).abs() < 3.0 * se.max(1e-12), "exact {exact}, mc {mean}, se {se}");
}

#[test]
fn monte_carlo_matches_exact_evaluation_on_every_environment() {
    for (k, id) in [EnvId::Star, EnvId::Gridworld, EnvId::Sepsis].into_iter().enumerate() {
        let env = id.build();
        let (opt, _) = plan_optimal(&env, None).unwrap();
        monte_carlo_agrees(&env, &opt.mix_with_uniform(0.3), 100_000, k as u64);
        monte_carlo_agrees(&env, &Policy::for_mdp_uniform(&env), 100_000, 10 + k as u64);
    }
}

#[test]
fn built_environments_are_valid() {
    for env in [
        star::build_star_mdp(),
        gridworld::build_gridworld(),
        sepsis::build_sepsis_mdp(),
        counterexample::build_counterexample_mdp(),
    ] {
        for (idx, row) in env.transitions().iter().enumerate() {
            let s = idx / env.num_actions();
            assert_abs_diff_eq!(row.total_mass(env.num_states()), 1.0, epsilon = 1e-9);
            assert!(row.to_dense(env.num_states()).iter().all(|&p| p >= 0.0), "row {s}");
        }
        assert!(env.initial_state() < env.num_states());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planner_dominates_random_policies(seed in any::<u64>(), s in 2usize..7, a in 1usize..4, h in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(s, a, h, &mut rng);
        let (pi, best) = plan_optimal(&mdp, None).unwrap();
        prop_assert!(pi.is_deterministic());
        let values = best.per_state_values.as_ref().unwrap();
        prop_assert!((values[0][mdp.initial_state()] - best.value).abs() <= 1e-9);
        for _ in 0..100 {
            let p = random_policy(&mdp, &mut rng);
            prop_assert!(evaluate_policy(&mdp, &p).unwrap().value <= best.value + 1e-9);
        }
    }

    #[test]
    fn planner_matches_expectimax_on_small_mdps(seed in any::<u64>(), s in 1usize..=5, a in 1usize..=4, h in 1usize..=3) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(s.max(2), a, h, &mut rng);
        let (_, best) = plan_optimal(&mdp, None).unwrap();
        prop_assert!((best.value - expectimax(&mdp, 0, mdp.initial_state())).abs() <= 1e-9);
    }

    #[test]
    fn policy_rows_are_distributions(seed in any::<u64>(), eps in 0.0f64..=1.0) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(4, 3, 4, &mut rng);
        let p = random_policy(&mdp, &mut rng).mix_with_uniform(eps);
        for t in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                let row = p.probs(t, s);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
        let rep = evaluate_policy(&mdp, &p).unwrap();
        prop_assert!((rep.per_state_values.unwrap()[0][mdp.initial_state()] - rep.value).abs() <= 1e-9);
    }

    #[test]
    fn enumeration_agrees_with_evaluation(seed in any::<u64>(), h in 1usize..=4) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(4, 2, h, &mut rng);
        let p = random_policy(&mdp, &mut rng);
        prop_assert!((evaluate_policy(&mdp, &p).unwrap().value - path_enumeration_value(&mdp, &p)).abs() <= 1e-9);
    }
}
