//! Benchmark environments and offline dataset generation.

pub mod counterexample;
pub mod dataset;
pub mod gridworld;
pub mod sepsis;
pub mod star;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use dataset::{generate_offline_dataset, make_behavior_policy, DatasetSpec, OfflineDataset};

use crate::error::Error;
use crate::mdp::TabularMdp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Star,
    Gridworld,
    Sepsis,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Star, EnvId::Gridworld, EnvId::Sepsis];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Star => "star",
            EnvId::Gridworld => "gridworld",
            EnvId::Sepsis => "sepsis",
        }
    }

    pub fn build(self) -> TabularMdp {
        match self {
            EnvId::Star => star::build_star_mdp(),
            EnvId::Gridworld => gridworld::build_gridworld(),
            EnvId::Sepsis => sepsis::build_sepsis_mdp(),
        }
    }

    pub fn default_dataset(self) -> DatasetSpec {
        match self {
            EnvId::Star => DatasetSpec { n_episodes: 40, epsilon: 0.1, scripted: true },
            EnvId::Gridworld => DatasetSpec { n_episodes: 150, epsilon: 0.1, scripted: false },
            EnvId::Sepsis => DatasetSpec { n_episodes: 10_000, epsilon: 0.1, scripted: false },
        }
    }

    /// Display record for one visited state, used by labeling front ends.
    pub fn annotate_state(self, s: usize) -> Value {
        match self {
            EnvId::Star => json!({ "state": s, "label": star::state_label(s) }),
            EnvId::Gridworld => {
                let (row, col) = gridworld::coords(s);
                json!({ "state": s, "row": row, "col": col })
            }
            EnvId::Sepsis => match sepsis::SepsisState::decode(s) {
                Some(v) => json!({
                    "state": s,
                    "dead": false,
                    "heart_rate": v.heart_rate,
                    "sys_bp": v.sys_bp,
                    "oxygen": v.oxygen,
                    "glucose": v.glucose,
                    "diabetic": v.diabetic,
                    "abx_on": v.abx_on,
                    "vaso_on": v.vaso_on,
                    "vent_on": v.vent_on,
                    "num_abnormal": v.num_abnormal(),
                }),
                None => json!({ "state": s, "dead": true }),
            },
        }
    }

    /// Display record for an action.
    pub fn annotate_action(self, a: usize) -> Value {
        match self {
            EnvId::Star => json!({ "action": a, "label": format!("a{a}") }),
            EnvId::Gridworld => {
                let name = ["up", "left", "down", "right", "stay"].get(a).copied().unwrap_or("?");
                json!({ "action": a, "label": name })
            }
            EnvId::Sepsis => {
                let t = sepsis::Treatment::from_action(a);
                json!({
                    "action": a,
                    "antibiotics": t.antibiotics,
                    "vasopressors": t.vasopressors,
                    "ventilation": t.ventilation,
                })
            }
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "star" | "star_mdp" => Ok(EnvId::Star),
            "gridworld" => Ok(EnvId::Gridworld),
            "sepsis" => Ok(EnvId::Sepsis),
            other => Err(Error::UnknownEnvironment(other.to_string())),
        }
    }
}
