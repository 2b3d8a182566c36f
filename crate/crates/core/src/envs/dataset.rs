use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{star, EnvId};
use crate::error::{input_err, Result};
use crate::mdp::{plan_optimal, rollout_with, Policy, TabularMdp, Trajectory};
use crate::rng::rng_from_seed;

/// How an offline dataset is produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_episodes: usize,
    /// Noise of the epsilon-optimal behavior policy (ignored when scripted).
    pub epsilon: f64,
    /// Use the hand-written Star MDP dataset instead of a behavior policy.
    #[serde(default)]
    pub scripted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineDataset {
    pub env_id: EnvId,
    pub behavior_epsilon: f64,
    pub seed: u64,
    pub scripted: bool,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    env_id: EnvId,
    epsilon: f64,
    seed: u64,
    n_trajectories: usize,
    scripted: bool,
}

impl OfflineDataset {
    pub fn generate(env_id: EnvId, mdp: &TabularMdp, spec: &DatasetSpec, seed: u64) -> Result<Self> {
        let trajectories = if spec.scripted {
            if env_id != EnvId::Star {
                return input_err("only the star environment has a scripted dataset");
            }
            if spec.n_episodes == 0 {
                return input_err("n_episodes must be positive");
            }
            star::scripted_trajectories(spec.n_episodes, seed)
        } else {
            let policy = make_behavior_policy(mdp, spec.epsilon)?;
            generate_offline_dataset(mdp, &policy, spec.n_episodes, seed)?
        };
        Ok(Self { env_id, behavior_epsilon: spec.epsilon, seed, scripted: spec.scripted, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Number of observed transitions.
    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Line-delimited JSON: a header object, then one trajectory per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            env_id: self.env_id,
            epsilon: self.behavior_epsilon,
            seed: self.seed,
            n_trajectories: self.trajectories.len(),
            scripted: self.scripted,
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
        let Some(first) = lines.next() else {
            return input_err("dataset file is empty");
        };
        let header: Header = serde_json::from_str(&first?)?;
        let mut trajectories = Vec::with_capacity(header.n_trajectories);
        for line in lines {
            let t: Trajectory = serde_json::from_str(&line?)?;
            trajectories.push(Trajectory::new(t.states, t.actions)?);
        }
        if trajectories.len() != header.n_trajectories {
            return input_err(format!(
                "header announces {} trajectories, found {}",
                header.n_trajectories,
                trajectories.len()
            ));
        }
        Ok(Self {
            env_id: header.env_id,
            behavior_epsilon: header.epsilon,
            seed: header.seed,
            scripted: header.scripted,
            trajectories,
        })
    }
}

/// Optimal policy mixed with uniform noise: each row puts `1 - eps + eps / A`
/// on the optimal action.
pub fn make_behavior_policy(mdp: &TabularMdp, epsilon: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return input_err(format!("epsilon must be in [0, 1], got {epsilon}"));
    }
    let (optimal, _) = plan_optimal(mdp, None)?;
    Ok(optimal.mix_with_uniform(epsilon))
}

pub fn generate_offline_dataset(mdp: &TabularMdp, policy: &Policy, n_episodes: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if n_episodes == 0 {
        return input_err("n_episodes must be positive");
    }
    policy.check_dims(mdp)?;
    let mut rng = rng_from_seed(seed);
    Ok((0..n_episodes).map(|_| rollout_with(mdp, policy, mdp.initial_state(), &mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::gridworld;

    #[test]
    fn behavior_mixture_weights() {
        let m = gridworld::build_gridworld();
        let p = make_behavior_policy(&m, 0.1).unwrap();
        for t in 0..m.horizon() {
            for s in 0..m.num_states() {
                let top = p.probs(t, s).iter().copied().fold(0.0, f64::max);
                assert!((top - (0.9 + 0.1 / 5.0)).abs() < 1e-12);
            }
        }
        assert!(make_behavior_policy(&m, 1.5).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let m = gridworld::build_gridworld();
        let spec = DatasetSpec { n_episodes: 5, epsilon: 0.3, scripted: false };
        let d = OfflineDataset::generate(EnvId::Gridworld, &m, &spec, 9).unwrap();
        let mut buf = Vec::new();
        d.write_jsonl(&mut buf).unwrap();
        let back = OfflineDataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, d);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("\"env_id\":\"gridworld\""));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = "{\"env_id\":\"star\",\"epsilon\":0.1,\"seed\":1,\"n_trajectories\":2,\"scripted\":false}\n{\"states\":[0,1],\"actions\":[0]}\n";
        assert!(OfflineDataset::read_jsonl(text.as_bytes()).is_err());
    }
}
