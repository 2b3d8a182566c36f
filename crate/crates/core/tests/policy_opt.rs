use approx::assert_abs_diff_eq;
use oprl::envs::{counterexample, EnvId};
use oprl::harness::{ElicitationRun, ExperimentConfig, Strategy};
use oprl::mdp::{evaluate_policy, plan_optimal};
use oprl::models::{MdpShape, RewardEnsemble, TransitionEnsemble};
use oprl::policy_opt::{
    pessimistic_policy, random_calibrated_instance, random_mdp, random_policy, random_transitions,
    verify_pessimism_bound, verify_telescoping, PessimismConfig,
};
use oprl::rng::{rng_from_seed, Rng};
use oprl::{Policy, TabularMdp};
use proptest::prelude::*;
use rand::Rng as _;

fn exact_ensembles(mdp: &TabularMdp) -> (TransitionEnsemble, RewardEnsemble) {
    let rows = mdp.transitions().to_vec();
    let t = TransitionEnsemble::from_members(MdpShape::from(mdp), vec![rows.clone(), rows], mdp.r_max(), None).unwrap();
    let table = mdp.expected_reward_table();
    let r = RewardEnsemble::from_members(mdp.num_actions(), vec![table.clone(), table]).unwrap();
    (t, r)
}

#[test]
fn perfect_models_recover_the_optimal_plan() {
    let mut rng = rng_from_seed(0);
    for id in [EnvId::Star, EnvId::Gridworld] {
        let env = id.build();
        let (t, r) = exact_ensembles(&env);
        let (policy, report) = pessimistic_policy(&t, &r, &PessimismConfig::new(0.5, 0.1).unwrap()).unwrap();
        let (_, best) = plan_optimal(&env, None).unwrap();
        assert_abs_diff_eq!(report.value, best.value, epsilon = 1e-9);
        assert_abs_diff_eq!(evaluate_policy(&env, &policy).unwrap().value, best.value, epsilon = 1e-9);
    }
    for _ in 0..20 {
        let mdp = random_mdp(5, 3, 4, &mut rng);
        let (t, r) = exact_ensembles(&mdp);
        let (policy, _) = pessimistic_policy(&t, &r, &PessimismConfig::new(1.0, 1.0).unwrap()).unwrap();
        let (_, best) = plan_optimal(&mdp, None).unwrap();
        assert_abs_diff_eq!(evaluate_policy(&mdp, &policy).unwrap().value, best.value, epsilon = 1e-9);
    }
}

#[test]
fn counterexample_under_unit_penalties() {
    let fx = counterexample::fixture();
    // the worst case inside the confidence set values both actions at zero
    let worst = fx.worst_case_model().with_state_reward(fx.pessimistic_state_reward()).unwrap();
    for a in 0..2 {
        let pick = Policy::deterministic(1, 3, 2, &[a, 0, 0]).unwrap();
        assert_abs_diff_eq!(evaluate_policy(&worst, &pick).unwrap().value, 0.0, epsilon = 1e-12);
    }
    // the additive penalty ranks them the same way, strictly
    let (t, r) = fx.ensembles();
    let (policy, report) = pessimistic_policy(&t, &r, &PessimismConfig::new(1.0, 1.0).unwrap()).unwrap();
    assert_eq!(policy.greedy_action(0, 0), 1);
    assert_abs_diff_eq!(report.value, -0.1, epsilon = 1e-12);
}

/// Expected number of times each state is entered at steps `1..=H` in `env`.
fn entry_visits(env: &TabularMdp, policy: &Policy) -> Vec<f64> {
    let n = env.num_states();
    let mut mu = vec![0.0; n];
    mu[env.initial_state()] = 1.0;
    let mut visits = vec![0.0; n];
    for t in 0..env.horizon() {
        let mut next = vec![0.0; n];
        for s in 0..n {
            if mu[s] == 0.0 || env.is_terminal(s) {
                continue;
            }
            for (a, &p) in policy.probs(t, s).iter().enumerate() {
                for (to, q) in env.transition(s, a).to_dense(n).into_iter().enumerate() {
                    next[to] += mu[s] * p * q;
                }
            }
        }
        visits.iter_mut().zip(&next).for_each(|(v, x)| *v += x);
        mu = next;
    }
    visits
}

#[test]
fn trained_star_policy_avoids_the_penalty_leaf() {
    let mut cfg = ExperimentConfig::preset(EnvId::Star, Strategy::SimOprl);
    cfg.budget = 200;
    for seed in 0..3 {
        let mut run = ElicitationRun::start(&cfg, seed).unwrap();
        run.run_with_oracle().unwrap();
        let (t, r) = (run.transitions(), run.rewards());
        let (policy, _) = pessimistic_policy(t, r, &PessimismConfig::new(0.5, 0.1).unwrap()).unwrap();
        let visits = entry_visits(run.env(), &policy);
        assert!(visits[3] < 0.05, "seed {seed}: {visits:?}");
    }
}

#[test]
fn exact_ensembles_meet_the_bound_with_equality() {
    let mut rng = rng_from_seed(1);
    for _ in 0..20 {
        let mdp = random_mdp(6, 3, 4, &mut rng);
        let (t, r) = exact_ensembles(&mdp);
        let report = verify_pessimism_bound(&mdp, &t, &r, 100, 0).unwrap();
        assert!(report.holds());
        assert!(report.max_violation.abs() <= 1e-9, "{}", report.max_violation);
    }
}

#[test]
fn miscalibrated_ensembles_are_flagged() {
    let mut rng = rng_from_seed(2);
    let mdp = random_mdp(6, 3, 4, &mut rng);
    let wrong = random_transitions(&mdp, &mut rng);
    let t = TransitionEnsemble::from_members(MdpShape::from(&mdp), vec![wrong.clone(), wrong], mdp.r_max(), None).unwrap();
    let (_, r) = exact_ensembles(&mdp);
    let report = verify_pessimism_bound(&mdp, &t, &r, 10, 0).unwrap();
    assert!(!report.calibrated);
    assert!(!report.holds());
}

#[test]
fn unperturbed_model_has_no_gap() {
    let mut rng = rng_from_seed(3);
    let mdp = random_mdp(5, 3, 4, &mut rng);
    let p = random_policy(&mdp, &mut rng);
    let rep = verify_telescoping(&mdp, mdp.transitions(), &p).unwrap();
    assert_eq!(rep.value_gap, 0.0);
    assert_eq!(rep.bound, 0.0);
    assert!(rep.holds);
}

#[test]
fn one_step_bound_is_a_single_term() {
    let mut rng = rng_from_seed(4);
    for _ in 0..20 {
        let mdp = random_mdp(5, 3, 1, &mut rng);
        let perturbed = random_transitions(&mdp, &mut rng);
        let a = rng.gen_range(0..3);
        let pick = Policy::deterministic(1, 5, 3, &vec![a; 5]).unwrap();
        let rep = verify_telescoping(&mdp, &perturbed, &pick).unwrap();
        let idx = mdp.initial_state() * 3 + a;
        let gap = mdp.transitions()[idx].l1_distance(&perturbed[idx], 5);
        assert_abs_diff_eq!(rep.bound, gap * mdp.entry_value_bound(), epsilon = 1e-12);
        assert!(rep.holds);
    }
}

#[test]
fn telescoping_holds_on_random_five_state_mdps() {
    let mut rng = rng_from_seed(5);
    let mut checked = 0;
    for _ in 0..10 {
        let mdp = random_mdp(5, 3, 4, &mut rng);
        for _ in 0..50 {
            let perturbed = random_transitions(&mdp, &mut rng);
            for _ in 0..20 {
                let p = random_policy(&mdp, &mut rng);
                let rep = verify_telescoping(&mdp, &perturbed, &p).unwrap();
                assert!(rep.holds, "{rep:?}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 10_000);
}

fn penalized_values(t: &TransitionEnsemble, r: &RewardEnsemble, lambda_r: f64) -> Vec<f64> {
    [0.0, 0.5, 1.0, 2.0]
        .iter()
        .map(|&lt| pessimistic_policy(t, r, &PessimismConfig::new(lt, lambda_r).unwrap()).unwrap().1.value)
        .collect()
}

fn random_rewards(rng: &mut Rng, k: usize, len: usize, num_actions: usize) -> RewardEnsemble {
    let members = (0..k).map(|_| (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    RewardEnsemble::from_members(num_actions, members).unwrap()
}

#[test]
fn star_run_is_monotone_in_the_transition_weight() {
    let cfg = ExperimentConfig::preset(EnvId::Star, Strategy::SimOprl);
    let mut run = ElicitationRun::start(&cfg, 0).unwrap();
    run.run_with_oracle().unwrap();
    let values = penalized_values(run.transitions(), run.rewards(), 0.1);
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{values:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservatism_is_monotone(seed in any::<u64>(), s in 2usize..7, a in 1usize..4, h in 1usize..5, lambda_r in 0.0f64..2.0) {
        let mut rng = rng_from_seed(seed);
        let (mdp, t, _) = random_calibrated_instance(s, a, h, 3, &mut rng);
        let r = random_rewards(&mut rng, 3, mdp.num_pairs(), a);
        let values = penalized_values(&t, &r, lambda_r);
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", values);
        }
    }

    #[test]
    fn pessimism_bound_holds_on_bracketed_instances(seed in any::<u64>(), h in 1usize..6, k in 2usize..6) {
        let mut rng = rng_from_seed(seed);
        let (mdp, t, r) = random_calibrated_instance(6, 3, h, k, &mut rng);
        let report = verify_pessimism_bound(&mdp, &t, &r, 100, seed).unwrap();
        prop_assert!(report.calibrated);
        prop_assert_eq!(report.violations, 0);
        prop_assert!(report.max_violation <= 1e-9);
    }

    #[test]
    fn telescoping_bound_holds(seed in any::<u64>(), s in 2usize..7, a in 1usize..4, h in 1usize..6) {
        let mut rng = rng_from_seed(seed);
        let mdp = random_mdp(s, a, h, &mut rng);
        let perturbed = random_transitions(&mdp, &mut rng);
        let p = random_policy(&mdp, &mut rng);
        let rep = verify_telescoping(&mdp, &perturbed, &p).unwrap();
        prop_assert!(rep.holds, "{:?}", rep);
        prop_assert!(rep.bound >= 0.0);
    }
}
