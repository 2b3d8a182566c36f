use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::elicitation::OracleMode;
use crate::envs::{DatasetSpec, EnvId};
use crate::error::{Error, Result};
use crate::models::{RewardFitParams, TransitionFitParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    OprlUniform,
    OprlUncertainty,
    SimOprl,
    Pbop,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::OprlUniform, Strategy::OprlUncertainty, Strategy::SimOprl, Strategy::Pbop];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::OprlUniform => "oprl_uniform",
            Strategy::OprlUncertainty => "oprl_uncertainty",
            Strategy::SimOprl => "sim_oprl",
            Strategy::Pbop => "pbop",
        }
    }

    /// Whether the strategy queries the true environment.
    pub fn is_online(self) -> bool {
        self == Strategy::Pbop
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// What the top of the 0-100 scale means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// The optimal policy of the true environment.
    #[default]
    Optimal,
    /// The best policy offline planning can return for the seed's dataset:
    /// planned with the true rewards and the usual transition penalty.
    OfflineOptimal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    /// Plan the returned policy with the point estimates only.
    pub no_output_pessimism: bool,
    /// Build the candidate set without the transition penalty.
    pub no_rollout_pessimism: bool,
    /// Query two random candidates instead of the most uncertain pair.
    pub no_optimism: bool,
}

impl Ablations {
    pub fn any(&self) -> bool {
        self.no_output_pessimism || self.no_rollout_pessimism || self.no_optimism
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_output_pessimism {
            parts.push("no_output_pessimism");
        }
        if self.no_rollout_pessimism {
            parts.push("no_rollout_pessimism");
        }
        if self.no_optimism {
            parts.push("no_optimism");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvId,
    pub strategy: Strategy,
    pub ablations: Ablations,
    pub dataset: DatasetSpec,
    /// Total number of preference labels.
    pub budget: usize,
    pub batch_size: usize,
    pub transition_fit: TransitionFitParams,
    pub reward_fit: RewardFitParams,
    pub lambda_t: f64,
    pub lambda_r: f64,
    /// Spread of the per-member reward prior, in units of `r_max / H`.
    #[serde(default = "default_prior_scale")]
    pub reward_prior_scale: f64,
    pub oracle: OracleMode,
    pub seeds: Vec<u64>,
    /// Normalized-return gap defining sample complexity.
    pub target_gap: f64,
    #[serde(default)]
    pub anchor_mode: AnchorMode,
    /// Candidate pairs scored per uncertainty-sampling query.
    pub n_candidates: usize,
    pub rollouts_per_policy: usize,
    /// Must be set for strategies that interact with the true environment.
    pub online_access: bool,
}

fn default_prior_scale() -> f64 {
    1.0
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(EnvId::Star, Strategy::SimOprl)
    }
}

impl ExperimentConfig {
    /// Published defaults for an environment and strategy.
    pub fn preset(env: EnvId, strategy: Strategy) -> Self {
        let (budget, batch_size, lambda_t, lambda_r) = match env {
            EnvId::Star => (60, 4, 0.5, 0.1),
            EnvId::Gridworld => (200, 4, 0.5, 0.1),
            EnvId::Sepsis => (1000, 100, 1.0, 1.0),
        };
        Self {
            env,
            strategy,
            ablations: Ablations::default(),
            dataset: env.default_dataset(),
            budget,
            batch_size,
            transition_fit: TransitionFitParams::default(),
            reward_fit: RewardFitParams::default(),
            lambda_t,
            lambda_r,
            reward_prior_scale: default_prior_scale(),
            oracle: OracleMode::Bernoulli,
            seeds: (0..6).collect(),
            target_gap: 20.0,
            anchor_mode: AnchorMode::Optimal,
            n_candidates: 45,
            rollouts_per_policy: 10,
            online_access: strategy.is_online(),
        }
    }

    /// Parses a possibly partial config: missing fields take the preset of
    /// the given `env` and `strategy`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let user: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(user) = user else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let env = match user.get("env") {
            Some(serde_json::Value::String(name)) => name.parse::<EnvId>()?,
            Some(other) => return Err(Error::UnknownEnvironment(other.to_string())),
            None => EnvId::Star,
        };
        let strategy = match user.get("strategy") {
            Some(serde_json::Value::String(name)) => name.parse::<Strategy>()?,
            Some(other) => return Err(Error::Config(format!("invalid strategy {other}"))),
            None => Strategy::SimOprl,
        };
        let mut user = user;
        user.insert("env".into(), serde_json::to_value(env)?);
        user.insert("strategy".into(), serde_json::to_value(strategy)?);
        let mut merged = serde_json::to_value(Self::preset(env, strategy))?;
        merge(&mut merged, serde_json::Value::Object(user));
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.strategy.is_online() && !self.online_access {
            return fail(format!("strategy `{}` needs online_access = true", self.strategy));
        }
        if !(self.lambda_t >= 0.0 && self.lambda_r >= 0.0 && self.reward_prior_scale >= 0.0) {
            return fail("penalty weights and prior scale must be non-negative".into());
        }
        if self.dataset.n_episodes == 0 {
            return fail("dataset must have at least one episode".into());
        }
        if !(0.0..=1.0).contains(&self.dataset.epsilon) {
            return fail(format!("behavior epsilon {} outside [0, 1]", self.dataset.epsilon));
        }
        if self.dataset.scripted && self.env != EnvId::Star {
            return fail("only the star environment has a scripted dataset".into());
        }
        if self.strategy != Strategy::SimOprl && self.strategy != Strategy::Pbop {
            if self.ablations.no_rollout_pessimism || self.ablations.no_optimism {
                return fail("rollout ablations apply to model-rollout strategies only".into());
            }
            if self.dataset.n_episodes < 2 {
                return fail("dataset sampling needs at least two episodes".into());
            }
        }
        if self.transition_fit.n_members < 2 || self.reward_fit.n_members < 2 {
            return fail("ensembles need at least two members".into());
        }
        if self.n_candidates == 0 || self.rollouts_per_policy == 0 {
            return fail("n_candidates and rollouts_per_policy must be positive".into());
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
