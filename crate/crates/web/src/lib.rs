//! Browser demo: three small operations exported to JavaScript.
//!
//! Each export takes and returns JSON strings so the page needs no glue
//! beyond the generated bindings. The plain functions underneath are what the
//! tests call on the host.

use oprl::envs::{counterexample, gridworld, EnvId};
use oprl::harness::{run_experiment, ExperimentConfig};
use oprl::mdp::plan_optimal;
use oprl::policy_opt::{penalized_reward, PessimismConfig};
use oprl::{Policy, TabularMdp};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_js(result: Result<Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

/// Runs one seed of a (partial) experiment config with the synthetic
/// oracle and returns the learning curve.
pub fn learning_curve(config_json: &str, seed: u64) -> Result<Value, String> {
    let mut cfg = ExperimentConfig::from_json_str(config_json).map_err(|e| e.to_string())?;
    if cfg.env == EnvId::Sepsis {
        return Err("the sepsis simulator is too large for the browser demo".into());
    }
    cfg.seeds = vec![seed];
    let series = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let points = &series.seeds[0].points;
    Ok(json!({
        "env": cfg.env,
        "strategy": cfg.strategy,
        "anchors": series.anchors,
        "target_gap": cfg.target_gap,
        "sample_complexity": series.sample_complexity(),
        "points": points,
    }))
}

/// Indexed by gridworld action: up, left, down, right, stay.
const ARROWS: [&str; 5] = ["↑", "←", "↓", "→", "·"];

/// Optimal plan on the 4x4 gridworld after replacing the reward of every
/// cell. Returns the first-step action of each cell and the start value.
pub fn gridworld_plan(cell_rewards: &[f64]) -> Result<Value, String> {
    let base = gridworld::build_gridworld();
    if cell_rewards.len() != base.num_states() {
        return Err(format!("expected {} cell rewards, got {}", base.num_states(), cell_rewards.len()));
    }
    let env: TabularMdp = base.with_state_reward(cell_rewards.to_vec()).map_err(|e| e.to_string())?;
    let (policy, report) = plan_optimal(&env, None).map_err(|e| e.to_string())?;
    let values = report.per_state_values.expect("planner reports values");
    let cells: Vec<Value> = (0..env.num_states())
        .map(|s| {
            let (row, col) = gridworld::coords(s);
            let action = policy.greedy_action(0, s);
            json!({
                "state": s,
                "row": row,
                "col": col,
                "reward": cell_rewards[s],
                "walled": s == gridworld::WALLED_CELL,
                "action": action,
                "arrow": ARROWS[action],
                "value": values[0][s],
            })
        })
        .collect();
    Ok(json!({ "start": env.initial_state(), "value": report.value, "cells": cells }))
}

/// The one-step example under penalty weights: each action's penalized
/// value, the action chosen, and what it is worth in the true environment.
pub fn counterexample_values(lambda_t: f64, lambda_r: f64) -> Result<Value, String> {
    let cfg = PessimismConfig::new(lambda_t, lambda_r).map_err(|e| e.to_string())?;
    let fixture = counterexample::fixture();
    let (transitions, rewards) = fixture.ensembles();
    let penalized = penalized_reward(&transitions, &rewards, &cfg);
    let model = transitions.model_mdp();
    let truth = counterexample::build_counterexample_mdp();
    let (policy, report) = plan_optimal(&model, Some(&penalized)).map_err(|e| e.to_string())?;
    let chosen = policy.greedy_action(0, 0);
    let pick = Policy::deterministic(1, 3, 2, &[chosen, 0, 0]).map_err(|e| e.to_string())?;
    let true_value = oprl::mdp::evaluate_policy(&truth, &pick).map_err(|e| e.to_string())?.value;
    Ok(json!({
        "lambda_t": lambda_t,
        "lambda_r": lambda_r,
        "penalized_values": [penalized[0], penalized[1]],
        "chosen_action": chosen,
        "model_value": report.value,
        "true_value": true_value,
        "optimal_value": counterexample::TO_REWARD_STATE[0],
    }))
}

#[wasm_bindgen(js_name = learningCurve)]
pub fn learning_curve_js(config_json: &str, seed: u64) -> Result<String, JsError> {
    to_js(learning_curve(config_json, seed))
}

#[wasm_bindgen(js_name = gridworldPlan)]
pub fn gridworld_plan_js(cell_rewards: Vec<f64>) -> Result<String, JsError> {
    to_js(gridworld_plan(&cell_rewards))
}

#[wasm_bindgen(js_name = counterexampleValues)]
pub fn counterexample_values_js(lambda_t: f64, lambda_r: f64) -> Result<String, JsError> {
    to_js(counterexample_values(lambda_t, lambda_r))
}

/// Default cell rewards of the gridworld, for initializing the editor.
#[wasm_bindgen(js_name = gridworldRewards)]
pub fn gridworld_rewards() -> Vec<f64> {
    gridworld::build_gridworld().state_reward().to_vec()
}
