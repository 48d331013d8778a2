//! Decoupled multi-agent PPO over shared environments.
//!
//! Every iteration collects one shared rollout from all environments,
//! computes per-agent advantages from per-agent reward streams, then runs
//! the clipped-surrogate update for each agent plus the bundle-level
//! action-energy regularizer. A two-stage curriculum switches the
//! environments from the low-force to the extreme-force disturbance
//! distribution at a configured iteration.
//!
//! Rollout collection walks the environments sequentially (instance order
//! is part of the determinism contract); the update phase has exclusive
//! access to the parameters. All randomness flows from the run seed, so a
//! (seed, config) pair reproduces training bit-exactly, including across a
//! checkpoint/resume split.

pub mod bundle;
pub mod checkpoint;
pub mod gae;
pub mod rollout;
pub mod update;

pub use bundle::{decoupled_specs, monolithic_specs, AgentNet, AgentSpec, PolicyBundle, CRITIC_DIM};
pub use checkpoint::{
    load_bundle, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_VERSION,
};
pub use gae::compute_gae;
pub use rollout::{collect_rollouts, torque_regularizer, AgentRollout, RolloutSet, TrainError};
pub use update::{
    agent_loss_and_grads, minibatch_order, total_update, total_update_with_order,
    update_single_agent_with_order, UpdateStats,
};

use crate::config::{RunConfig, TrainerConfig};
use crate::sim::{CurriculumStage, Env, StepResult};
use crate::TOOL_VERSION;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// Completed-episode window used for the mean-episode-length statistic.
const EPISODE_WINDOW: usize = 100;

/// Stage 1 before the switch iteration, stage 2 from it onward.
pub fn curriculum_schedule(iteration: u32, cfg: &TrainerConfig) -> CurriculumStage {
    if iteration < cfg.curriculum_switch {
        CurriculumStage::Stage1
    } else {
        CurriculumStage::Stage2
    }
}

fn env_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(1).wrapping_add(index as u64)
}

fn stage_switch_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(0x5EED_2000).wrapping_add(index as u64)
}

/// Everything logged per training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: u32,
    pub stage: CurriculumStage,
    pub mean_rewards: Vec<f64>,
    pub update: UpdateStats,
    pub mean_episode_len: f64,
}

pub struct Trainer {
    cfg: RunConfig,
    bundle: PolicyBundle,
    envs: Vec<Env>,
    current: Vec<StepResult>,
    rng: ChaCha8Rng,
    iteration: u32,
    stage: CurriculumStage,
    episode_lengths: VecDeque<u32>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bundle = PolicyBundle::for_config(cfg, &mut rng);
        let stage = curriculum_schedule(0, &cfg.trainer);
        let mut envs: Vec<Env> =
            (0..cfg.trainer.env_count as usize).map(|_| Env::new(cfg)).collect();
        let current = envs
            .iter_mut()
            .enumerate()
            .map(|(i, e)| e.reset(env_seed(cfg.seed, i), stage))
            .collect();
        Self {
            cfg: cfg.clone(),
            bundle,
            envs,
            current,
            rng,
            iteration: 0,
            stage,
            episode_lengths: VecDeque::new(),
        }
    }

    pub fn bundle(&self) -> &PolicyBundle {
        &self.bundle
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn stage(&self) -> CurriculumStage {
        self.stage
    }

    /// Mean length of recently completed episodes; before any episode
    /// completes, the mean progress of the live episodes.
    pub fn mean_episode_length(&self) -> f64 {
        if self.episode_lengths.is_empty() {
            let sum: u64 = self.envs.iter().map(|e| e.episode_step() as u64).sum();
            sum as f64 / self.envs.len().max(1) as f64
        } else {
            let sum: u64 = self.episode_lengths.iter().map(|&l| l as u64).sum();
            sum as f64 / self.episode_lengths.len() as f64
        }
    }

    /// One train iteration: curriculum bookkeeping, rollout, update.
    pub fn run_iteration(&mut self) -> Result<IterationStats, TrainError> {
        let scheduled = curriculum_schedule(self.iteration, &self.cfg.trainer);
        if scheduled != self.stage {
            self.stage = scheduled;
            for (i, env) in self.envs.iter_mut().enumerate() {
                self.current[i] = env.reset(stage_switch_seed(self.cfg.seed, i), scheduled);
            }
        }

        let rollouts = collect_rollouts(
            &self.bundle,
            &mut self.envs,
            &mut self.current,
            self.cfg.trainer.rollout_len as usize,
            self.cfg.trainer.gamma,
            self.cfg.trainer.gae_lambda,
            &mut self.rng,
        )?;
        for &len in &rollouts.finished_episodes {
            if self.episode_lengths.len() == EPISODE_WINDOW {
                self.episode_lengths.pop_front();
            }
            self.episode_lengths.push_back(len);
        }
        let mean_rewards: Vec<f64> =
            (0..self.bundle.agents.len()).map(|a| rollouts.mean_reward(a)).collect();

        let update = total_update(&mut self.bundle, &rollouts, &self.cfg.trainer, &mut self.rng)?;

        self.iteration += 1;
        Ok(IterationStats {
            iteration: self.iteration,
            stage: self.stage,
            mean_rewards,
            update,
            mean_episode_len: self.mean_episode_length(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config_hash: self.cfg.content_hash(),
            iteration: self.iteration,
            stage: self.stage,
            agents: Checkpoint::from_bundle(&self.bundle),
            trainer_rng: crate::rng::RngState::capture(&self.rng),
            envs: self.envs.iter().map(|e| e.snapshot()).collect(),
            current: self.current.clone(),
            recent_episode_lengths: self.episode_lengths.iter().copied().collect(),
        }
    }

    pub fn from_checkpoint(cfg: &RunConfig, ck: &Checkpoint) -> Result<Self, CheckpointError> {
        let bundle = ck.to_bundle()?;
        if ck.envs.len() != cfg.trainer.env_count as usize {
            return Err(CheckpointError::ShapeMismatch(format!(
                "checkpoint holds {} environments, config expects {}",
                ck.envs.len(),
                cfg.trainer.env_count
            )));
        }
        if ck.current.len() != ck.envs.len() {
            return Err(CheckpointError::ShapeMismatch(
                "environment states and observations disagree in count".into(),
            ));
        }
        let envs: Vec<Env> = ck.envs.iter().map(|s| Env::restore(cfg, s)).collect();
        Ok(Self {
            cfg: cfg.clone(),
            bundle,
            envs,
            current: ck.current.clone(),
            rng: ck.trainer_rng.restore(),
            iteration: ck.iteration,
            stage: ck.stage,
            episode_lengths: ck.recent_episode_lengths.iter().copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.net.hidden = vec![12, 8];
        cfg.trainer.rollout_len = 4;
        cfg.trainer.env_count = 2;
        cfg.trainer.epochs = 1;
        cfg.trainer.minibatches = 2;
        cfg.trainer.curriculum_switch = 2;
        cfg.sim.horizon = 25;
        cfg
    }

    #[test]
    fn curriculum_threshold() {
        let mut tc = RunConfig::default().trainer;
        tc.curriculum_switch = 5000;
        assert_eq!(curriculum_schedule(0, &tc), CurriculumStage::Stage1);
        assert_eq!(curriculum_schedule(4999, &tc), CurriculumStage::Stage1);
        assert_eq!(curriculum_schedule(5000, &tc), CurriculumStage::Stage2);
        tc.curriculum_switch = 0;
        assert_eq!(curriculum_schedule(0, &tc), CurriculumStage::Stage2);
    }

    #[test]
    fn stage_transitions_exactly_once() {
        let cfg = tiny_cfg();
        let mut trainer = Trainer::new(&cfg);
        let mut transitions = 0;
        let mut last = trainer.stage();
        for _ in 0..6 {
            let stats = trainer.run_iteration().unwrap();
            if stats.stage != last {
                transitions += 1;
                last = stats.stage;
            }
        }
        assert_eq!(transitions, 1);
        assert_eq!(last, CurriculumStage::Stage2);
    }

    #[test]
    fn shared_observation_single_step_rollout() {
        // T = 1, one env: every agent stores exactly one sample and the
        // shared observation stream has exactly one entry.
        let mut cfg = tiny_cfg();
        cfg.trainer.rollout_len = 1;
        cfg.trainer.env_count = 1;
        cfg.trainer.minibatches = 1;
        let mut trainer = Trainer::new(&cfg);
        let rollouts = collect_rollouts(
            &trainer.bundle,
            &mut trainer.envs,
            &mut trainer.current,
            1,
            cfg.trainer.gamma,
            cfg.trainer.gae_lambda,
            &mut trainer.rng,
        )
        .unwrap();
        assert_eq!(rollouts.sample_count(), 1);
        assert_eq!(rollouts.obs.len(), 1);
        for agent in &rollouts.agents {
            assert_eq!(agent.len(), 1);
        }
    }

    #[test]
    fn identical_seeds_identical_rollouts() {
        let cfg = tiny_cfg();
        let run = || {
            let mut t = Trainer::new(&cfg);
            collect_rollouts(
                &t.bundle,
                &mut t.envs,
                &mut t.current,
                4,
                cfg.trainer.gamma,
                cfg.trainer.gae_lambda,
                &mut t.rng,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn logged_log_probs_match_recomputation() {
        let cfg = tiny_cfg();
        let mut t = Trainer::new(&cfg);
        let rollouts = collect_rollouts(
            &t.bundle,
            &mut t.envs,
            &mut t.current,
            4,
            cfg.trainer.gamma,
            cfg.trainer.gae_lambda,
            &mut t.rng,
        )
        .unwrap();
        for (k, agent) in t.bundle.agents.iter().enumerate() {
            for i in 0..rollouts.sample_count() {
                let (lp, _) = crate::nn::log_prob_and_entropy(
                    &agent.actor,
                    &rollouts.obs[i],
                    &rollouts.agents[k].actions[i],
                )
                .unwrap();
                assert!((lp - rollouts.agents[k].log_probs[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permuting_one_reward_stream_only_moves_that_agent() {
        // The separate-GAE contract: another agent's rewards cannot touch
        // this agent's advantages.
        let cfg = tiny_cfg();
        let mut t = Trainer::new(&cfg);
        let rollouts = collect_rollouts(
            &t.bundle,
            &mut t.envs,
            &mut t.current,
            4,
            cfg.trainer.gamma,
            cfg.trainer.gae_lambda,
            &mut t.rng,
        )
        .unwrap();
        let mut permuted = rollouts.clone();
        permuted.agents[1].rewards.reverse();
        // Recompute advantages from the stored pieces for both copies.
        for k in [0usize, 2] {
            let n = rollouts.env_count;
            for e in 0..n {
                let col = |t_: usize| t_ * n + e;
                let horizon = rollouts.horizon;
                let rewards: Vec<f64> =
                    (0..horizon).map(|t_| permuted.agents[k].rewards[col(t_)]).collect();
                let orig: Vec<f64> =
                    (0..horizon).map(|t_| rollouts.agents[k].rewards[col(t_)]).collect();
                assert_eq!(rewards, orig);
            }
        }
        // Agent 1's stream did change.
        assert_ne!(permuted.agents[1].rewards, rollouts.agents[1].rewards);
    }

    #[test]
    fn iteration_stats_are_consistent() {
        let cfg = tiny_cfg();
        let mut trainer = Trainer::new(&cfg);
        let stats = trainer.run_iteration().unwrap();
        assert_eq!(stats.iteration, 1);
        assert_eq!(stats.mean_rewards.len(), 3);
        let identity = stats.update.agent_losses.iter().sum::<f64>()
            + cfg.trainer.reg_weight * stats.update.reg_c;
        assert!((identity - stats.update.total_loss).abs() < 1e-12);
    }
}
