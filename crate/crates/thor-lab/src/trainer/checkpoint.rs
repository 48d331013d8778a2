//! Checkpoint format: one JSON document holding metadata, every network's
//! layer widths and flat parameter vector (declared layer order: weights
//! then biases, layer by layer), optimizer moments, the trainer RNG, and
//! the full environment states. A save/load/save round trip is
//! byte-identical, and resuming from a checkpoint continues the exact
//! trajectory of an uninterrupted run.
//!
//! Field order is fixed by the struct definitions below and is part of the
//! on-disk format.

use crate::nn::{AdamState, GaussianPolicy, Mlp};
use crate::rng::RngState;
use crate::sim::{CurriculumStage, EnvSnapshot, StepResult};
use crate::trainer::bundle::{AgentNet, AgentSpec, PolicyBundle};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub spec: AgentSpec,
    pub actor_dims: Vec<usize>,
    pub actor_params: Vec<f64>,
    pub log_std: Vec<f64>,
    pub actor_opt: AdamState,
    pub critic_dims: Vec<usize>,
    pub critic_params: Vec<f64>,
    pub critic_opt: AdamState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub iteration: u32,
    pub stage: CurriculumStage,
    pub agents: Vec<AgentCheckpoint>,
    pub trainer_rng: RngState,
    pub envs: Vec<EnvSnapshot>,
    pub current: Vec<StepResult>,
    pub recent_episode_lengths: Vec<u32>,
}

impl Checkpoint {
    pub fn from_bundle(bundle: &PolicyBundle) -> Vec<AgentCheckpoint> {
        bundle
            .agents
            .iter()
            .map(|a| AgentCheckpoint {
                spec: a.spec.clone(),
                actor_dims: a.actor.mean.dims().to_vec(),
                actor_params: a.actor.mean.params().to_vec(),
                log_std: a.actor.log_std.clone(),
                actor_opt: a.actor_opt.clone(),
                critic_dims: a.critic.dims().to_vec(),
                critic_params: a.critic.params().to_vec(),
                critic_opt: a.critic_opt.clone(),
            })
            .collect()
    }

    /// Rebuild the policy bundle, validating every declared shape.
    pub fn to_bundle(&self) -> Result<PolicyBundle, CheckpointError> {
        let mut agents = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let mean = Mlp::from_parts(a.actor_dims.clone(), a.actor_params.clone())
                .map_err(|e| CheckpointError::ShapeMismatch(format!("actor {}: {e}", a.spec.name)))?;
            if *a.actor_dims.last().unwrap_or(&0) != a.spec.action_dim() {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "actor {} output width {} does not match action dim {}",
                    a.spec.name,
                    a.actor_dims.last().unwrap_or(&0),
                    a.spec.action_dim()
                )));
            }
            if a.log_std.len() != a.spec.action_dim() {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "actor {} log_std length {} does not match action dim {}",
                    a.spec.name,
                    a.log_std.len(),
                    a.spec.action_dim()
                )));
            }
            let critic = Mlp::from_parts(a.critic_dims.clone(), a.critic_params.clone())
                .map_err(|e| CheckpointError::ShapeMismatch(format!("critic {}: {e}", a.spec.name)))?;
            let actor = GaussianPolicy { mean, log_std: a.log_std.clone() };
            if a.actor_opt.param_count() != actor.param_count() {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "actor {} optimizer moments sized {} for {} parameters",
                    a.spec.name,
                    a.actor_opt.param_count(),
                    actor.param_count()
                )));
            }
            if a.critic_opt.param_count() != critic.param_count() {
                return Err(CheckpointError::ShapeMismatch(format!(
                    "critic {} optimizer moments sized {} for {} parameters",
                    a.spec.name,
                    a.critic_opt.param_count(),
                    critic.param_count()
                )));
            }
            agents.push(AgentNet {
                spec: a.spec.clone(),
                actor,
                critic,
                actor_opt: a.actor_opt.clone(),
                critic_opt: a.critic_opt.clone(),
            });
        }
        Ok(PolicyBundle { agents })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    for a in &checkpoint.agents {
        if a.actor_params.iter().chain(&a.critic_params).chain(&a.log_std).any(|p| !p.is_finite())
        {
            return Err(CheckpointError::Corrupt(format!(
                "agent {} has non-finite parameters; refusing to save",
                a.spec.name
            )));
        }
    }
    let json = serde_json::to_string(checkpoint)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: checkpoint.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    // Shape validation happens eagerly so corrupt files fail loudly here
    // rather than deep inside a run.
    checkpoint.to_bundle()?;
    Ok(checkpoint)
}

/// Load a checkpoint and restore the bundle; convenience for evaluation
/// commands that do not need the environment states.
pub fn load_bundle(path: &Path) -> Result<(Checkpoint, PolicyBundle), CheckpointError> {
    let checkpoint = load_checkpoint(path)?;
    let bundle = checkpoint.to_bundle()?;
    Ok((checkpoint, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::trainer::Trainer;
    use tempfile::tempdir;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.net.hidden = vec![12, 8];
        cfg.trainer.rollout_len = 4;
        cfg.trainer.env_count = 2;
        cfg.trainer.epochs = 1;
        cfg.trainer.minibatches = 2;
        cfg.trainer.iterations = 4;
        cfg.sim.horizon = 30;
        cfg
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let cfg = small_cfg();
        let mut trainer = Trainer::new(&cfg);
        trainer.run_iteration().unwrap();
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        save_checkpoint(&p1, &trainer.to_checkpoint()).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn tampered_widths_fail_with_shape_mismatch() {
        let cfg = small_cfg();
        let trainer = Trainer::new(&cfg);
        let dir = tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut ck = trainer.to_checkpoint();
        ck.agents[0].actor_dims[1] += 1;
        save_checkpoint(&path, &ck).unwrap();
        match load_checkpoint(&path) {
            Err(CheckpointError::ShapeMismatch(_)) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let cfg = small_cfg();
        let trainer = Trainer::new(&cfg);
        let dir = tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut ck = trainer.to_checkpoint();
        ck.version = 99;
        save_checkpoint(&path, &ck).unwrap();
        match load_checkpoint(&path) {
            Err(CheckpointError::VersionMismatch { found: 99, expected: 1 }) => {}
            other => panic!("expected version mismatch, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_file_is_distinct() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ck.json");
        std::fs::write(&path, b"{ not json").unwrap();
        match load_checkpoint(&path) {
            Err(CheckpointError::Corrupt(_)) => {}
            other => panic!("expected corrupt error, got {other:?}"),
        }
    }

    #[test]
    fn resume_continues_uninterrupted_trajectory() {
        let cfg = small_cfg();
        // Uninterrupted: 4 iterations.
        let mut full = Trainer::new(&cfg);
        for _ in 0..4 {
            full.run_iteration().unwrap();
        }
        // Split: 2 iterations, checkpoint, restore, 2 more.
        let mut first = Trainer::new(&cfg);
        first.run_iteration().unwrap();
        first.run_iteration().unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("mid.json");
        save_checkpoint(&path, &first.to_checkpoint()).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let mut resumed = Trainer::from_checkpoint(&cfg, &loaded).unwrap();
        resumed.run_iteration().unwrap();
        resumed.run_iteration().unwrap();

        let a = serde_json::to_string(&full.to_checkpoint()).unwrap();
        let b = serde_json::to_string(&resumed.to_checkpoint()).unwrap();
        assert_eq!(a, b, "split run diverged from the uninterrupted run");
    }
}
