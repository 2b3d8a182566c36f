//! Experiment orchestration: the per-seed elicitation loop, normalized
//! metrics, sample complexity, and dataset sweeps.

pub mod config;
pub mod metrics;
pub mod run;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{Ablations, AnchorMode, ExperimentConfig, Strategy};
pub use metrics::{complexity_label, mean_ci, spearman, MetricsSeries, SeedSeries, SummaryPoint};
pub use run::{Anchors, ElicitationRun, MetricsPoint};

use crate::error::{Error, Result};
use crate::mdp::{occupancy, rollout_with, Policy, TabularMdp, Trajectory};
use crate::models::preference_prob;
use crate::rng::{derive_seed, rng_from_seed};

/// `100 * (raw - V_uniform) / (V_opt - V_uniform)`, clamped to `[0, 100]`.
pub fn normalize_return(env: &TabularMdp, raw: f64) -> Result<f64> {
    Ok(Anchors::for_env(env)?.normalize(raw))
}

/// Runs every seed of `cfg` with the synthetic oracle.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsSeries> {
    Ok(run_experiment_detailed(cfg)?.0)
}

/// As [`run_experiment`], also returning each seed's finished run.
pub fn run_experiment_detailed(cfg: &ExperimentConfig) -> Result<(MetricsSeries, Vec<ElicitationRun>)> {
    cfg.validate()?;
    let env = Arc::new(cfg.env.build());
    let anchors = Anchors::for_env(&env)?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut run = ElicitationRun::with_env(cfg, seed, Arc::clone(&env), anchors)?;
        run.run_with_oracle()?;
        runs.push(run);
    }
    let seeds = runs
        .iter()
        .map(|r| SeedSeries { seed: r.seed(), anchors: r.anchors(), points: r.points().to_vec() })
        .collect();
    Ok((MetricsSeries { anchors, anchor_mode: cfg.anchor_mode, target_gap: cfg.target_gap, seeds }, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Dataset size or behavior epsilon.
    pub setting: f64,
    pub sample_complexity: Option<usize>,
    pub per_seed_sample_complexity: Vec<Option<usize>>,
    pub final_mean: f64,
    /// Mean L1 error of the estimated transitions on reachable pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition_l1_error: Option<f64>,
    /// Agreement of the final reward estimate with true preferences.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preference_accuracy: Option<f64>,
    /// A noise-free behavior policy: the data covers a single path.
    #[serde(default)]
    pub degenerate_coverage: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Spearman correlation between setting and sample complexity (mean
    /// curve; unreached counts as larger than any budget).
    pub spearman_rho: f64,
}

fn complexity_rank_value(c: Option<usize>) -> f64 {
    c.map_or(f64::INFINITY, |n| n as f64)
}

fn sweep(
    cfg: &ExperimentConfig,
    settings: &[f64],
    apply: impl Fn(&mut ExperimentConfig, f64),
    accuracy: bool,
) -> Result<SweepReport> {
    if settings.len() < 2 {
        return Err(Error::Config("a sweep needs at least two settings".into()));
    }
    let mut rows = Vec::with_capacity(settings.len());
    for &v in settings {
        let mut c = cfg.clone();
        apply(&mut c, v);
        let (series, runs) = run_experiment_detailed(&c)?;
        let (transition_l1_error, preference_accuracy) = if accuracy {
            let (t, p) = model_accuracy(&runs)?;
            (Some(t), Some(p))
        } else {
            (None, None)
        };
        rows.push(SweepRow {
            setting: v,
            sample_complexity: series.sample_complexity(),
            per_seed_sample_complexity: series.per_seed_complexity(),
            final_mean: series.final_mean(),
            transition_l1_error,
            preference_accuracy,
            degenerate_coverage: accuracy && v == 0.0,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.setting).collect();
    let ys: Vec<f64> = rows.iter().map(|r| complexity_rank_value(r.sample_complexity)).collect();
    Ok(SweepReport { spearman_rho: spearman(&xs, &ys), rows })
}

/// Sample complexity as a function of the offline dataset size. Datasets
/// come from the noisy behavior policy, never the scripted variant.
pub fn sweep_dataset_size(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<SweepReport> {
    let settings: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    sweep(
        cfg,
        &settings,
        |c, v| {
            c.dataset.n_episodes = v as usize;
            c.dataset.scripted = false;
        },
        false,
    )
}

/// Sample complexity and model accuracy as a function of behavior noise.
pub fn sweep_dataset_optimality(cfg: &ExperimentConfig, epsilons: &[f64]) -> Result<SweepReport> {
    sweep(
        cfg,
        epsilons,
        |c, v| {
            c.dataset.epsilon = v;
            c.dataset.scripted = false;
        },
        true,
    )
}

/// Averages over runs of (transition L1 error on pairs the uniform policy
/// can reach, preference accuracy of the final reward mean on 100 pairs of
/// uniform-policy rollouts).
pub fn model_accuracy(runs: &[ElicitationRun]) -> Result<(f64, f64)> {
    let mut t_err = 0.0;
    let mut p_acc = 0.0;
    for run in runs {
        let env = run.env();
        let uniform = Policy::for_mdp_uniform(env);
        let occ = occupancy(env, &uniform)?;
        let n = env.num_states();
        let reachable: Vec<usize> =
            (0..env.num_pairs()).filter(|&i| occ.iter().any(|d| d[i] > 0.0)).collect();
        let err: f64 = reachable
            .iter()
            .map(|&i| env.transitions()[i].l1_distance(&run.transitions().mle()[i], n))
            .sum::<f64>()
            / reachable.len().max(1) as f64;
        t_err += err;

        let mut rng = rng_from_seed(derive_seed(run.seed(), "accuracy", 0));
        let mut correct = 0usize;
        let mut counted = 0usize;
        let m = env.num_actions();
        for _ in 0..100 {
            let a: Trajectory = rollout_with(env, &uniform, env.initial_state(), &mut rng);
            let b: Trajectory = rollout_with(env, &uniform, env.initial_state(), &mut rng);
            let diff = crate::mdp::trajectory_return(env, &a)? - crate::mdp::trajectory_return(env, &b)?;
            if diff == 0.0 {
                continue;
            }
            counted += 1;
            let p = preference_prob(run.rewards().mle(), m, &a, &b);
            if (p > 0.5) == (diff > 0.0) {
                correct += 1;
            }
        }
        p_acc += if counted == 0 { 1.0 } else { correct as f64 / counted as f64 };
    }
    let k = runs.len().max(1) as f64;
    Ok((t_err / k, p_acc / k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub final_mean: f64,
    pub sample_complexity: Option<usize>,
    /// Full method's final mean minus this row's.
    pub drop_vs_full: f64,
}

/// The full method and each single ablation.
pub fn run_ablations(cfg: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    let variants = [
        Ablations::default(),
        Ablations { no_output_pessimism: true, ..Default::default() },
        Ablations { no_rollout_pessimism: true, ..Default::default() },
        Ablations { no_optimism: true, ..Default::default() },
    ];
    let mut rows: Vec<AblationRow> = Vec::new();
    for ab in variants {
        let mut c = cfg.clone();
        c.ablations = ab;
        let series = run_experiment(&c)?;
        rows.push(AblationRow {
            label: ab.label(),
            final_mean: series.final_mean(),
            sample_complexity: series.sample_complexity(),
            drop_vs_full: 0.0,
        });
    }
    let full = rows[0].final_mean;
    for r in &mut rows {
        r.drop_vs_full = full - r.final_mean;
    }
    Ok(rows)
}
