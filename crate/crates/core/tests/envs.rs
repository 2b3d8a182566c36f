use approx::assert_abs_diff_eq;
use oprl::envs::sepsis::{self, SepsisState, DEATH_STATE, NUM_LIVE_STATES};
use oprl::envs::{counterexample, generate_offline_dataset, gridworld, make_behavior_policy, star, DatasetSpec, EnvId, OfflineDataset};
use oprl::mdp::{evaluate_policy, plan_optimal, rollout_with};
use oprl::policy_opt::random_policy;
use oprl::rng::rng_from_seed;
use oprl::{Policy, TabularMdp, TransitionRow};
use proptest::prelude::*;

#[test]
fn star_arrows_and_omitted_actions() {
    let env = star::build_star_mdp();
    assert_eq!(env.transition(1, 2).prob(4), 0.9);
    assert_abs_diff_eq!(env.transition(1, 2).prob(1), 0.1, epsilon = 1e-15);
    assert_eq!(env.transition(2, 0).prob(2), 1.0);
    for row in env.transitions() {
        assert_abs_diff_eq!(row.total_mass(5), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn gridworld_walled_cell_is_never_entered() {
    let env = gridworld::build_gridworld();
    for row in env.transitions() {
        assert_abs_diff_eq!(row.total_mass(16), 1.0, epsilon = 1e-12);
    }
    let mut rng = rng_from_seed(5);
    let (optimal, _) = plan_optimal(&env, None).unwrap();
    let policies = [Policy::for_mdp_uniform(&env), optimal, random_policy(&env, &mut rng)];
    for policy in &policies {
        for _ in 0..10_000 / policies.len() + 1 {
            let t = rollout_with(&env, policy, env.initial_state(), &mut rng);
            assert!(!t.states.contains(&gridworld::WALLED_CELL));
        }
    }
}

#[test]
fn sepsis_encoding_is_a_bijection() {
    let mut seen = vec![false; NUM_LIVE_STATES];
    for index in 0..NUM_LIVE_STATES {
        let s = SepsisState::decode(index).unwrap();
        assert_eq!(s.encode(), index);
        assert!(!seen[index]);
        seen[index] = true;
    }
    assert_eq!(SepsisState::decode(DEATH_STATE), None);
    assert_eq!(NUM_LIVE_STATES, 3 * 3 * 2 * 5 * 2 * 2 * 2 * 2);
}

#[test]
fn sepsis_death_absorbs() {
    let env = sepsis::build_sepsis_mdp();
    assert!(env.is_terminal(DEATH_STATE));
    for a in 0..sepsis::NUM_ACTIONS {
        assert_eq!(env.transition(DEATH_STATE, a).prob(DEATH_STATE), 1.0);
    }
}

#[test]
fn counterexample_values_and_fixture() {
    let env = counterexample::build_counterexample_mdp();
    let a = |x| Policy::deterministic(1, 3, 2, &[x, 0, 0]).unwrap();
    assert_abs_diff_eq!(evaluate_policy(&env, &a(0)).unwrap().value, 0.8, epsilon = 1e-12);
    let fx = counterexample::fixture();
    let worst = fx.worst_case_model();
    assert_abs_diff_eq!(evaluate_policy(&worst, &a(1)).unwrap().value, 0.4, epsilon = 1e-12);
    assert_abs_diff_eq!(evaluate_policy(&worst, &a(0)).unwrap().value, 0.1, epsilon = 1e-12);
    assert_eq!(fx.u_t[0], 0.4);
    let (t, _) = fx.ensembles();
    assert_abs_diff_eq!(t.u_t()[0], 0.4, epsilon = 1e-12);
}

#[test]
fn behavior_policy_extremes() {
    for id in [EnvId::Star, EnvId::Gridworld] {
        let env = id.build();
        let (optimal, _) = plan_optimal(&env, None).unwrap();
        assert_eq!(make_behavior_policy(&env, 0.0).unwrap(), optimal);
        assert_eq!(make_behavior_policy(&env, 1.0).unwrap(), Policy::for_mdp_uniform(&env));
    }
    assert!(make_behavior_policy(&star::build_star_mdp(), 1.5).is_err());
}

#[test]
fn gridworld_behavior_mass_on_the_optimal_action() {
    let env = gridworld::build_gridworld();
    let (optimal, _) = plan_optimal(&env, None).unwrap();
    let b = make_behavior_policy(&env, 0.1).unwrap();
    for t in 0..env.horizon() {
        for s in 0..env.num_states() {
            let best = optimal.greedy_action(t, s);
            assert_abs_diff_eq!(b.probs(t, s)[best], 0.9 + 0.1 / 5.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn behavior_value_falls_with_noise() {
    for id in [EnvId::Star, EnvId::Gridworld, EnvId::Sepsis] {
        let env = id.build();
        let values: Vec<f64> = [0.0, 0.1, 0.5, 1.0]
            .iter()
            .map(|&e| evaluate_policy(&env, &make_behavior_policy(&env, e).unwrap()).unwrap().value)
            .collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{id}: {values:?}");
        }
    }
}

#[test]
fn one_episode_of_a_deterministic_system() {
    let rows = vec![TransitionRow::point(1), TransitionRow::point(0), TransitionRow::point(0), TransitionRow::point(1)];
    let env = TabularMdp::new(2, 2, 4, 0, rows, vec![0.0, 1.0], vec![false; 2]).unwrap();
    let pi = Policy::deterministic(4, 2, 2, &[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
    let data = generate_offline_dataset(&env, &pi, 1, 77).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data[0].states, vec![0, 1, 1, 1, 1]);
    assert!(generate_offline_dataset(&env, &pi, 0, 0).is_err());
}

#[test]
fn scripted_star_data_covers_two_routes() {
    let spec = DatasetSpec { n_episodes: 40, epsilon: 0.0, scripted: true };
    let env = star::build_star_mdp();
    let data = OfflineDataset::generate(EnvId::Star, &env, &spec, 3).unwrap();
    assert_eq!(data.len(), 40);
    for (i, t) in data.trajectories.iter().enumerate() {
        let allowed: &[usize] = if i % 2 == 0 { &[0, 1, 3] } else { &[3, 1, 2] };
        assert!(t.states.iter().all(|s| allowed.contains(s)), "{t:?}");
        assert_eq!(t.states[0], allowed[0]);
        t.validate(&env).unwrap();
    }
    // neither script ever reaches the +10 leaf
    assert!(data.trajectories.iter().all(|t| !t.states.contains(&4)));
}

#[test]
fn sepsis_dataset_size() {
    let env = sepsis::build_sepsis_mdp();
    let spec = DatasetSpec { n_episodes: 10_000, epsilon: 0.1, scripted: false };
    let data = OfflineDataset::generate(EnvId::Sepsis, &env, &spec, 0).unwrap();
    assert_eq!(data.len(), 10_000);
    let early: usize = data
        .trajectories
        .iter()
        .filter(|t| t.len() < 20)
        .map(|t| {
            assert_eq!(*t.states.last().unwrap(), DEATH_STATE);
            20 - t.len()
        })
        .sum();
    assert_eq!(data.num_transitions(), 20 * 10_000 - early);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sepsis_round_trip(index in 0usize..NUM_LIVE_STATES) {
        let s = SepsisState::decode(index).unwrap();
        prop_assert_eq!(SepsisState::decode(s.encode()), Some(s));
    }

    #[test]
    fn gridworld_moves_stay_on_the_board(s in 0usize..16, a in 0usize..5) {
        let env = gridworld::build_gridworld();
        let row = env.transition(s, a).to_dense(16);
        let (r, c) = gridworld::coords(s);
        for (to, &p) in row.iter().enumerate() {
            if p > 0.0 {
                let (r2, c2) = gridworld::coords(to);
                prop_assert!(r.abs_diff(r2) + c.abs_diff(c2) <= 1);
            }
        }
    }
}
