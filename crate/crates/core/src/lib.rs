//! Offline preference-based reinforcement learning on tabular MDPs.
//!
//! The crate learns transition models from logged trajectories, elicits
//! pairwise trajectory preferences (from a synthetic oracle or a person),
//! fits Bradley-Terry reward ensembles, and extracts uncertainty-penalized
//! policies. The [`harness`] module ties these together into reproducible
//! experiments.

pub mod elicitation;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod models;
pub mod policy_opt;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use mdp::{Policy, TabularMdp, Trajectory, TransitionRow, ValueReport};
