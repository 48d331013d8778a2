//! Shared-environment rollout collection.
//!
//! All agents act in the same environments at the same time: one shared
//! observation stream, one concatenated action per step, but per-agent
//! action slices, log-probabilities, values, rewards, and (later)
//! advantages. Samples are stored flat with index `t * env_count + e`.

use crate::config::NUM_JOINTS;
use crate::nn::NetError;
use crate::sim::{Env, SimError, StepResult, OBS_DIM};
use crate::trainer::bundle::{PolicyBundle, CRITIC_DIM};
use crate::trainer::gae::compute_gae;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite observation in env {env} at component {component}")]
    NonFiniteObservation { env: usize, component: usize },
    #[error("non-finite loss in agent {agent}; iteration aborted and parameters restored")]
    NonFiniteLoss { agent: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// One agent's view of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRollout {
    pub action_dim: usize,
    /// Sampled action slices, `[sample][action_dim]`.
    pub actions: Vec<Vec<f64>>,
    /// Unit noise used to draw each action (for reparameterized terms).
    pub noise: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl AgentRollout {
    fn with_capacity(action_dim: usize, n: usize) -> Self {
        Self {
            action_dim,
            actions: Vec::with_capacity(n),
            noise: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// A complete rollout: shared observations and done flags plus one
/// [`AgentRollout`] per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSet {
    pub horizon: usize,
    pub env_count: usize,
    pub obs: Vec<[f64; OBS_DIM]>,
    pub critic_obs: Vec<[f64; CRITIC_DIM]>,
    pub dones: Vec<bool>,
    pub agents: Vec<AgentRollout>,
    /// Episode lengths that completed during collection.
    pub finished_episodes: Vec<u32>,
}

impl RolloutSet {
    pub fn sample_count(&self) -> usize {
        self.horizon * self.env_count
    }

    /// Mean per-step reward of one agent over the whole rollout.
    pub fn mean_reward(&self, agent: usize) -> f64 {
        let r = &self.agents[agent].rewards;
        r.iter().sum::<f64>() / r.len() as f64
    }
}

fn check_finite(step: &StepResult, env: usize) -> Result<(), TrainError> {
    for (i, v) in step
        .observation
        .flatten()
        .iter()
        .chain(step.privileged.flatten().iter())
        .enumerate()
    {
        if !v.is_finite() {
            return Err(TrainError::NonFiniteObservation { env, component: i });
        }
    }
    Ok(())
}

/// Roll every environment forward `horizon` steps under the current
/// policies. `current` holds each environment's latest step result and is
/// left pointing at the post-rollout state; terminated episodes are
/// auto-reset (with the done flag recorded in the rollout).
pub fn collect_rollouts(
    bundle: &PolicyBundle,
    envs: &mut [Env],
    current: &mut [StepResult],
    horizon: usize,
    gamma: f64,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutSet, TrainError> {
    assert!(horizon > 0, "rollout horizon must be positive");
    assert_eq!(envs.len(), current.len());
    let n_envs = envs.len();
    let n_samples = horizon * n_envs;
    let n_agents = bundle.agents.len();

    let mut obs = Vec::with_capacity(n_samples);
    let mut critic_obs = Vec::with_capacity(n_samples);
    let mut dones = Vec::with_capacity(n_samples);
    let mut agents: Vec<AgentRollout> = bundle
        .agents
        .iter()
        .map(|a| AgentRollout::with_capacity(a.spec.action_dim(), n_samples))
        .collect();
    let mut finished_episodes = Vec::new();

    for _t in 0..horizon {
        for e in 0..n_envs {
            check_finite(&current[e], e)?;
            let o = current[e].observation.flatten();
            let co = PolicyBundle::critic_input(&current[e].observation, &current[e].privileged);

            let mut whole_action = [0.0; NUM_JOINTS];
            for (k, agent) in bundle.agents.iter().enumerate() {
                let mean = agent.actor.mean.forward(&o)?;
                let (action, noise) = agent.actor.sample(&mean, rng);
                let log_prob = agent.actor.log_prob(&mean, &action);
                let value = agent.critic.forward(&co)?[0];
                whole_action[agent.spec.action_range()].copy_from_slice(&action);
                agents[k].actions.push(action);
                agents[k].noise.push(noise);
                agents[k].log_probs.push(log_prob);
                agents[k].values.push(value);
            }

            let step = envs[e].step(&whole_action)?;
            for (k, agent) in bundle.agents.iter().enumerate() {
                agents[k].rewards.push(agent.spec.mixed_reward(&step.rewards));
            }
            obs.push(o);
            critic_obs.push(co);
            dones.push(step.done);
            if step.done {
                finished_episodes.push(envs[e].episode_step());
                current[e] = envs[e].reset_episode();
            } else {
                current[e] = step;
            }
        }
    }

    // Bootstrap each agent from its critic's value of the final
    // observation (episode boundaries inside the rollout are handled by
    // the done flags).
    for k in 0..n_agents {
        let mut advantages = vec![0.0; n_samples];
        let mut returns = vec![0.0; n_samples];
        for e in 0..n_envs {
            let co = PolicyBundle::critic_input(&current[e].observation, &current[e].privileged);
            let bootstrap = bundle.agents[k].critic.forward(&co)?[0];
            let col = |t: usize| t * n_envs + e;
            let rewards: Vec<f64> = (0..horizon).map(|t| agents[k].rewards[col(t)]).collect();
            let values: Vec<f64> = (0..horizon).map(|t| agents[k].values[col(t)]).collect();
            let done_col: Vec<bool> = (0..horizon).map(|t| dones[col(t)]).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &done_col, bootstrap, gamma, lambda);
            for t in 0..horizon {
                advantages[col(t)] = adv[t];
                returns[col(t)] = ret[t];
            }
        }
        agents[k].advantages = advantages;
        agents[k].returns = returns;
    }

    Ok(RolloutSet { horizon, env_count: n_envs, obs, critic_obs, dones, agents, finished_episodes })
}

/// Mean squared action magnitude across the body, `(1/T) * sum_t
/// (|a_t^lower|^2 + |a_t^waist|^2 + |a_t^upper|^2)`: the output-energy
/// regularizer. The slices must share one horizon.
pub fn torque_regularizer(
    actions_lower: &[Vec<f64>],
    actions_waist: &[Vec<f64>],
    actions_upper: &[Vec<f64>],
) -> f64 {
    let t_len = actions_lower.len();
    assert_eq!(actions_waist.len(), t_len, "waist horizon mismatch");
    assert_eq!(actions_upper.len(), t_len, "upper horizon mismatch");
    if t_len == 0 {
        return 0.0;
    }
    let sq = |rows: &[Vec<f64>]| -> f64 {
        rows.iter().map(|row| row.iter().map(|a| a * a).sum::<f64>()).sum()
    };
    (sq(actions_lower) + sq(actions_waist) + sq(actions_upper)) / t_len as f64
}
