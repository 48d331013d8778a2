//! The policy bundle: one actor-critic pair per agent, each with its own
//! parameters and optimizer state. Agents share the observation layout;
//! actors see only the policy observation, critics additionally receive
//! the privileged inputs. Actor outputs are concatenated in the fixed
//! [lower | waist | upper] order to form the whole-body action.

use crate::config::{RunConfig, LOWER_RANGE, NUM_JOINTS, UPPER_RANGE, WAIST_RANGE};
use crate::nn::{AdamState, GaussianPolicy, Mlp};
use crate::sim::{Observation, PrivilegedObs, OBS_DIM, PRIV_DIM};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Critic input width: observation plus privileged block.
pub const CRITIC_DIM: usize = OBS_DIM + PRIV_DIM;

/// Which slice of the whole-body action an agent owns and how its reward
/// is mixed from the simulator's (lower, waist, upper) reward streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub action_start: usize,
    pub action_end: usize,
    pub reward_mix: [f64; 3],
}

impl AgentSpec {
    pub fn action_range(&self) -> Range<usize> {
        self.action_start..self.action_end
    }

    pub fn action_dim(&self) -> usize {
        self.action_end - self.action_start
    }

    pub fn mixed_reward(&self, rewards: &[f64; 3]) -> f64 {
        self.reward_mix.iter().zip(rewards).map(|(w, r)| w * r).sum()
    }
}

/// The decoupled three-agent split: lower body (3), waist (1), upper
/// body (2), each trained on its own reward stream.
pub fn decoupled_specs() -> Vec<AgentSpec> {
    vec![
        AgentSpec {
            name: "lower".into(),
            action_start: LOWER_RANGE.start,
            action_end: LOWER_RANGE.end,
            reward_mix: [1.0, 0.0, 0.0],
        },
        AgentSpec {
            name: "waist".into(),
            action_start: WAIST_RANGE.start,
            action_end: WAIST_RANGE.end,
            reward_mix: [0.0, 1.0, 0.0],
        },
        AgentSpec {
            name: "upper".into(),
            action_start: UPPER_RANGE.start,
            action_end: UPPER_RANGE.end,
            reward_mix: [0.0, 0.0, 1.0],
        },
    ]
}

/// A single whole-body agent over all six actions, rewarded with the sum
/// of the three streams (the ablation baseline).
pub fn monolithic_specs() -> Vec<AgentSpec> {
    vec![AgentSpec {
        name: "whole".into(),
        action_start: 0,
        action_end: NUM_JOINTS,
        reward_mix: [1.0, 1.0, 1.0],
    }]
}

/// One agent's networks and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNet {
    pub spec: AgentSpec,
    pub actor: GaussianPolicy,
    pub critic: Mlp,
    /// Adam over the actor's mean parameters followed by its log-std.
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl AgentNet {
    pub fn actor_param_count(&self) -> usize {
        self.actor.param_count()
    }

    /// Flat view of the actor parameters (mean net then log-std).
    pub fn actor_params_vec(&self) -> Vec<f64> {
        let mut v = self.actor.mean.params().to_vec();
        v.extend_from_slice(&self.actor.log_std);
        v
    }

    pub fn set_actor_params(&mut self, flat: &[f64]) {
        let n_mean = self.actor.mean.param_count();
        self.actor.mean.params_mut().copy_from_slice(&flat[..n_mean]);
        self.actor.log_std.copy_from_slice(&flat[n_mean..]);
        self.actor.clamp_log_std();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub agents: Vec<AgentNet>,
}

impl PolicyBundle {
    pub fn new(cfg: &RunConfig, specs: Vec<AgentSpec>, rng: &mut ChaCha8Rng) -> Self {
        let agents = specs
            .into_iter()
            .map(|spec| {
                let mut actor_dims = vec![OBS_DIM];
                actor_dims.extend(&cfg.net.hidden);
                actor_dims.push(spec.action_dim());
                let mut critic_dims = vec![CRITIC_DIM];
                critic_dims.extend(&cfg.net.hidden);
                critic_dims.push(1);
                let actor = GaussianPolicy::new(
                    &actor_dims,
                    rng,
                    cfg.net.output_gain,
                    cfg.net.init_log_std,
                );
                let critic = Mlp::new(&critic_dims, rng, 1.0);
                let actor_opt = AdamState::new(actor.param_count(), cfg.trainer.learning_rate);
                let critic_opt = AdamState::new(critic.param_count(), cfg.trainer.learning_rate);
                AgentNet { spec, actor, critic, actor_opt, critic_opt }
            })
            .collect();
        Self { agents }
    }

    pub fn for_config(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Self {
        let specs = if cfg.trainer.monolithic { monolithic_specs() } else { decoupled_specs() };
        Self::new(cfg, specs, rng)
    }

    /// Total action width covered by the agents (always the full body).
    pub fn action_dim(&self) -> usize {
        self.agents.iter().map(|a| a.spec.action_dim()).sum()
    }

    /// Deterministic whole-body action: each actor's mean, concatenated.
    pub fn act_mean(&self, obs: &Observation) -> [f64; NUM_JOINTS] {
        let flat = obs.flatten();
        let mut action = [0.0; NUM_JOINTS];
        for agent in &self.agents {
            let mean = agent.actor.mean.forward(&flat).expect("observation width is fixed");
            action[agent.spec.action_range()].copy_from_slice(&mean);
        }
        action
    }

    /// Flattened critic input: observation then privileged block.
    pub fn critic_input(obs: &Observation, privileged: &PrivilegedObs) -> [f64; CRITIC_DIM] {
        let mut out = [0.0; CRITIC_DIM];
        out[..OBS_DIM].copy_from_slice(&obs.flatten());
        out[OBS_DIM..].copy_from_slice(&privileged.flatten());
        out
    }
}
