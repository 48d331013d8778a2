//! Per-agent clipped-surrogate losses and the summed total update.
//!
//! Each agent maximizes `surrogate - c_v * value_mse + c_e * entropy` on
//! its own advantages; the bundle-level objective adds an action-energy
//! penalty `lambda_c * C` shared across agents. Implementation descends on
//! the negated objective. The penalty differentiates through the
//! reparameterized action `mu_theta(s) + sigma_theta * eps` with the
//! rollout's frozen noise, so on a frozen minibatch its gradient on the
//! action pathway is exactly `(2 * lambda_c / T) * a_t`.
//!
//! Reported numbers keep the maximization sign convention: `agent_losses`
//! are the per-agent objectives, `total_loss = sum(agent_losses) +
//! lambda_c * reg_c` is the logged identity.

use crate::config::TrainerConfig;
use crate::trainer::bundle::{AgentNet, PolicyBundle};
use crate::trainer::rollout::{RolloutSet, TrainError};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Shuffled sample indices for every epoch, split into minibatches:
/// `order[epoch][minibatch]` is a list of flat sample indices.
pub fn minibatch_order(
    n_samples: usize,
    epochs: usize,
    minibatches: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Vec<usize>>> {
    let mut order = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut idx: Vec<usize> = (0..n_samples).collect();
        idx.shuffle(rng);
        let base = n_samples / minibatches;
        let extra = n_samples % minibatches;
        let mut chunks = Vec::with_capacity(minibatches);
        let mut start = 0;
        for m in 0..minibatches {
            let len = base + if m < extra { 1 } else { 0 };
            chunks.push(idx[start..start + len].to_vec());
            start += len;
        }
        order.push(chunks);
    }
    order
}

/// Loss terms and gradients of one agent on one minibatch.
#[derive(Debug, Clone)]
pub struct AgentBatch {
    /// Clipped-surrogate mean (maximization sign).
    pub surrogate: f64,
    /// Value MSE.
    pub value_loss: f64,
    /// Policy entropy (state independent for a global log-std).
    pub entropy: f64,
    /// This minibatch's share of the action-energy regularizer
    /// (`1/T * sum over the minibatch`), computed from reparameterized
    /// current-policy actions.
    pub reg_c: f64,
    /// Objective value `surrogate - c_v*value_loss + c_e*entropy`.
    pub objective: f64,
    /// Descent gradients for the actor (mean params then log-std).
    pub actor_grads: Vec<f64>,
    /// Descent gradients for the critic.
    pub critic_grads: Vec<f64>,
    /// Sum over samples of `log_prob_old - log_prob_new`.
    pub kl_sum: f64,
    /// Number of samples whose ratio left `[1 - eps, 1 + eps]`.
    pub clip_count: usize,
    pub sample_count: usize,
    /// True when a non-finite ratio forced this minibatch to be skipped.
    pub skipped: bool,
}

/// Compute one agent's minibatch loss and descent gradients. Advantages
/// are normalized per minibatch (zero mean, unit population std).
/// `reg_weight` is the bundle's lambda_c and `total_samples` is the full
/// rollout size T that the regularizer averages over.
pub fn agent_loss_and_grads(
    agent: &AgentNet,
    rollouts: &RolloutSet,
    agent_idx: usize,
    idxs: &[usize],
    cfg: &TrainerConfig,
) -> Result<AgentBatch, TrainError> {
    let data = &rollouts.agents[agent_idx];
    let b = idxs.len();
    let total_samples = rollouts.sample_count();
    let n_actor = agent.actor.param_count();
    let n_mean = agent.actor.mean.param_count();
    let act_dim = agent.spec.action_dim();

    let mut out = AgentBatch {
        surrogate: 0.0,
        value_loss: 0.0,
        entropy: agent.actor.entropy(),
        reg_c: 0.0,
        objective: 0.0,
        actor_grads: vec![0.0; n_actor],
        critic_grads: vec![0.0; agent.critic.param_count()],
        kl_sum: 0.0,
        clip_count: 0,
        sample_count: b,
        skipped: false,
    };
    if b == 0 {
        return Ok(out);
    }

    // Per-minibatch advantage normalization.
    let mean_adv = idxs.iter().map(|&i| data.advantages[i]).sum::<f64>() / b as f64;
    let var_adv =
        idxs.iter().map(|&i| (data.advantages[i] - mean_adv).powi(2)).sum::<f64>() / b as f64;
    let std_adv = var_adv.sqrt() + cfg.adv_norm_eps;

    let stds = agent.actor.stds();
    let inv_b = 1.0 / b as f64;
    let reg_scale = 2.0 * cfg.reg_weight / total_samples as f64;

    for &i in idxs {
        let obs = &rollouts.obs[i];
        let cobs = &rollouts.critic_obs[i];
        let action = &data.actions[i];
        let noise = &data.noise[i];

        let cache = agent.actor.mean.forward_cached(obs)?;
        let mean = cache.output().to_vec();
        let log_prob_new = agent.actor.log_prob(&mean, action);
        let ratio = (log_prob_new - data.log_probs[i]).exp();
        if !ratio.is_finite() {
            out.skipped = true;
            return Ok(out);
        }
        let adv = (data.advantages[i] - mean_adv) / std_adv;

        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
        out.surrogate += unclipped.min(clipped) * inv_b;
        out.kl_sum += data.log_probs[i] - log_prob_new;
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            out.clip_count += 1;
        }

        // Descent: d(-surrogate)/d(log_prob); the clipped branch is
        // constant in theta.
        let gate = if unclipped <= clipped { 1.0 } else { 0.0 };
        let d_logp = -inv_b * gate * ratio * adv;
        let (d_mean, d_log_std) = agent.actor.log_prob_grads(&mean, action);

        let mut upstream = vec![0.0; act_dim];
        for k in 0..act_dim {
            upstream[k] = d_logp * d_mean[k];
        }
        if cfg.reg_weight != 0.0 {
            for k in 0..act_dim {
                let reparam = mean[k] + stds[k] * noise[k];
                out.reg_c += reparam * reparam / total_samples as f64;
                upstream[k] += reg_scale * reparam;
                out.actor_grads[n_mean + k] += reg_scale * reparam * stds[k] * noise[k];
            }
        }
        agent.actor.mean.backward(&cache, &upstream, &mut out.actor_grads[..n_mean])?;
        for k in 0..act_dim {
            out.actor_grads[n_mean + k] += d_logp * d_log_std[k];
        }

        // Critic: descend on c_v * (V - R)^2.
        let vcache = agent.critic.forward_cached(cobs)?;
        let v = vcache.output()[0];
        let err = v - data.returns[i];
        out.value_loss += err * err * inv_b;
        let upstream_v = [cfg.value_coef * 2.0 * err * inv_b];
        agent.critic.backward(&vcache, &upstream_v, &mut out.critic_grads)?;
    }

    // Entropy bonus: descend on -c_e * H; dH/d(log_std_k) = 1.
    for k in 0..act_dim {
        out.actor_grads[n_mean + k] -= cfg.entropy_coef;
    }

    out.objective =
        out.surrogate - cfg.value_coef * out.value_loss + cfg.entropy_coef * out.entropy;
    Ok(out)
}

fn clip_global_norm(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

/// Apply one computed minibatch to an agent's parameters (gradient-norm
/// clip, then Adam on actor and critic).
fn apply_agent_batch(
    agent: &mut AgentNet,
    batch: &mut AgentBatch,
    cfg: &TrainerConfig,
) -> Result<(), TrainError> {
    if batch.skipped {
        return Ok(());
    }
    if !batch.objective.is_finite() || !batch.reg_c.is_finite() {
        return Err(TrainError::NonFiniteLoss { agent: usize::MAX });
    }
    clip_global_norm(&mut batch.actor_grads, cfg.grad_clip);
    clip_global_norm(&mut batch.critic_grads, cfg.grad_clip);
    let mut actor_params = agent.actor_params_vec();
    agent.actor_opt.step(&mut actor_params, &batch.actor_grads)?;
    agent.set_actor_params(&actor_params);
    agent.critic_opt.step(agent.critic.params_mut(), &batch.critic_grads)?;
    Ok(())
}

/// Aggregated statistics of one bundle update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    /// Per-agent objective values (maximization sign), averaged over the
    /// processed minibatches weighted by sample count.
    pub agent_losses: Vec<f64>,
    pub value_losses: Vec<f64>,
    pub entropies: Vec<f64>,
    /// Action-energy regularizer over the rollout, averaged across epochs.
    pub reg_c: f64,
    /// `sum(agent_losses) + reg_weight * reg_c`.
    pub total_loss: f64,
    /// Mean `log_prob_old - log_prob_new` over all processed samples.
    pub kl: f64,
    /// Fraction of samples whose ratio left the clip interval.
    pub clip_fraction: f64,
    pub skipped_minibatches: u32,
}

/// Run the full epochs-by-minibatches update with a caller-supplied
/// minibatch order (`order[epoch][minibatch]`). Exposed so the decoupling
/// contract (independent per-agent updates at lambda_c = 0) can be checked
/// against [`update_single_agent_with_order`] under an identical order.
pub fn total_update_with_order(
    bundle: &mut PolicyBundle,
    rollouts: &RolloutSet,
    cfg: &TrainerConfig,
    order: &[Vec<Vec<usize>>],
) -> Result<UpdateStats, TrainError> {
    let n_agents = bundle.agents.len();
    let snapshot = bundle.clone();
    let total_samples = rollouts.sample_count() as f64;

    let mut loss_acc = vec![0.0; n_agents];
    let mut vloss_acc = vec![0.0; n_agents];
    let mut ent_acc = vec![0.0; n_agents];
    let mut reg_acc = 0.0;
    let mut kl_sum = 0.0;
    let mut clip_count = 0usize;
    let mut samples_processed = 0usize;
    let mut skipped = 0u32;

    let epochs = order.len();
    for epoch in order {
        for mb in epoch {
            for a in 0..n_agents {
                let mut batch = agent_loss_and_grads(&bundle.agents[a], rollouts, a, mb, cfg)
                    .map_err(|e| restore_on_error(bundle, &snapshot, e))?;
                if batch.skipped {
                    skipped += 1;
                    continue;
                }
                let weight = batch.sample_count as f64 / total_samples;
                loss_acc[a] += batch.objective * weight;
                vloss_acc[a] += batch.value_loss * weight;
                ent_acc[a] += batch.entropy * weight;
                // reg_c is already the minibatch's 1/T share; agents'
                // shares add up to the bundle C.
                reg_acc += batch.reg_c;
                kl_sum += batch.kl_sum;
                clip_count += batch.clip_count;
                samples_processed += batch.sample_count;
                apply_agent_batch(&mut bundle.agents[a], &mut batch, cfg).map_err(|e| {
                    let e = match e {
                        TrainError::NonFiniteLoss { .. } => TrainError::NonFiniteLoss { agent: a },
                        other => other,
                    };
                    restore_on_error(bundle, &snapshot, e)
                })?;
            }
        }
    }

    let per_epoch = 1.0 / epochs.max(1) as f64;
    let agent_losses: Vec<f64> = loss_acc.iter().map(|l| l * per_epoch).collect();
    let reg_c = reg_acc * per_epoch;
    let total_loss = agent_losses.iter().sum::<f64>() + cfg.reg_weight * reg_c;
    Ok(UpdateStats {
        agent_losses,
        value_losses: vloss_acc.iter().map(|l| l * per_epoch).collect(),
        entropies: ent_acc.iter().map(|l| l * per_epoch).collect(),
        reg_c,
        total_loss,
        kl: if samples_processed > 0 { kl_sum / samples_processed as f64 } else { 0.0 },
        clip_fraction: if samples_processed > 0 {
            clip_count as f64 / samples_processed as f64
        } else {
            0.0
        },
        skipped_minibatches: skipped,
    })
}

fn restore_on_error(bundle: &mut PolicyBundle, snapshot: &PolicyBundle, e: TrainError) -> TrainError {
    *bundle = snapshot.clone();
    e
}

/// Fresh-shuffle entry point: draws the minibatch order from `rng` and
/// runs [`total_update_with_order`].
pub fn total_update(
    bundle: &mut PolicyBundle,
    rollouts: &RolloutSet,
    cfg: &TrainerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, TrainError> {
    let order = minibatch_order(
        rollouts.sample_count(),
        cfg.epochs as usize,
        cfg.minibatches as usize,
        rng,
    );
    total_update_with_order(bundle, rollouts, cfg, &order)
}

/// Update one agent alone under the given minibatch order: the reference
/// path for the decoupling contract.
pub fn update_single_agent_with_order(
    agent: &mut AgentNet,
    rollouts: &RolloutSet,
    agent_idx: usize,
    cfg: &TrainerConfig,
    order: &[Vec<Vec<usize>>],
) -> Result<(), TrainError> {
    for epoch in order {
        for mb in epoch {
            let mut batch = agent_loss_and_grads(agent, rollouts, agent_idx, mb, cfg)?;
            if batch.skipped {
                continue;
            }
            apply_agent_batch(agent, &mut batch, cfg)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::sim::{CurriculumStage, Env, StepResult};
    use crate::trainer::bundle::decoupled_specs;
    use crate::trainer::rollout::collect_rollouts;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.net.hidden = vec![16, 8];
        cfg.trainer.rollout_len = 6;
        cfg.trainer.env_count = 2;
        cfg.trainer.epochs = 2;
        cfg.trainer.minibatches = 2;
        cfg
    }

    fn make_rollouts(cfg: &RunConfig, bundle: &PolicyBundle, seed: u64) -> RolloutSet {
        let mut envs: Vec<Env> = (0..cfg.trainer.env_count).map(|_| Env::new(cfg)).collect();
        let mut current: Vec<StepResult> = envs
            .iter_mut()
            .enumerate()
            .map(|(i, e)| e.reset(seed + i as u64, CurriculumStage::Stage1))
            .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        collect_rollouts(
            bundle,
            &mut envs,
            &mut current,
            cfg.trainer.rollout_len as usize,
            cfg.trainer.gamma,
            cfg.trainer.gae_lambda,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn surrogate_clip_arithmetic() {
        // ratio 1.3, eps 0.15, adv 2 -> min(2.6, 2.3) = 2.3. Checked on the
        // scalar pieces the loss uses.
        let ratio: f64 = 1.3;
        let adv = 2.0;
        let eps = 0.15;
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        assert_abs_diff_eq!(unclipped.min(clipped), 2.3, epsilon = 1e-12);
    }

    #[test]
    fn on_policy_surrogate_equals_normalized_advantage_mean() {
        // With old == new policy every ratio is exactly 1, so the
        // surrogate equals the mean of the normalized advantages (which is
        // zero by construction) and no sample is clipped.
        let cfg = small_cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
        let rollouts = make_rollouts(&cfg, &bundle, 3);
        let idxs: Vec<usize> = (0..rollouts.sample_count()).collect();
        for a in 0..3 {
            let batch =
                agent_loss_and_grads(&bundle.agents[a], &rollouts, a, &idxs, &cfg.trainer).unwrap();
            assert!(!batch.skipped);
            assert_abs_diff_eq!(batch.surrogate, 0.0, epsilon = 1e-9);
            assert_eq!(batch.clip_count, 0);
            assert_abs_diff_eq!(batch.kl_sum, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn value_loss_zero_when_critic_matches_returns() {
        let cfg = small_cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
        let mut rollouts = make_rollouts(&cfg, &bundle, 5);
        // Force returns to equal the recorded values.
        for agent in &mut rollouts.agents {
            agent.returns = agent.values.clone();
        }
        // A critic evaluated at the same inputs reproduces `values`, so the
        // value loss must vanish.
        let idxs: Vec<usize> = (0..rollouts.sample_count()).collect();
        for a in 0..3 {
            let batch =
                agent_loss_and_grads(&bundle.agents[a], &rollouts, a, &idxs, &cfg.trainer).unwrap();
            assert_abs_diff_eq!(batch.value_loss, 0.0, epsilon = 1e-18);
        }
    }

    #[test]
    fn lambda_coupling_matches_finite_differences() {
        // The regularizer's contribution to the actor gradient equals the
        // finite-difference gradient of lambda_c * C(theta) with C built
        // from reparameterized actions on the frozen minibatch.
        let cfg = small_cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
        let rollouts = make_rollouts(&cfg, &bundle, 9);
        let idxs: Vec<usize> = (0..rollouts.sample_count()).collect();
        let lambda = 0.37;

        let mut with = cfg.trainer.clone();
        with.reg_weight = lambda;
        let mut without = cfg.trainer.clone();
        without.reg_weight = 0.0;

        let agent_idx = 0;
        let g_with =
            agent_loss_and_grads(&bundle.agents[agent_idx], &rollouts, agent_idx, &idxs, &with)
                .unwrap();
        let g_without =
            agent_loss_and_grads(&bundle.agents[agent_idx], &rollouts, agent_idx, &idxs, &without)
                .unwrap();

        // C(theta) via reparameterized actions.
        let c_of = |agent: &AgentNet| -> f64 {
            let data = &rollouts.agents[agent_idx];
            let stds = agent.actor.stds();
            let mut c = 0.0;
            for &i in &idxs {
                let mean = agent.actor.mean.forward(&rollouts.obs[i]).unwrap();
                for k in 0..agent.spec.action_dim() {
                    let a = mean[k] + stds[k] * data.noise[i][k];
                    c += a * a;
                }
            }
            c / rollouts.sample_count() as f64
        };

        let h = 1e-6;
        let mut agent = bundle.agents[agent_idx].clone();
        let n_mean = agent.actor.mean.param_count();
        for p in [0usize, 7, n_mean / 2, n_mean - 1] {
            let orig = agent.actor.mean.params()[p];
            agent.actor.mean.params_mut()[p] = orig + h;
            let up = c_of(&agent);
            agent.actor.mean.params_mut()[p] = orig - h;
            let down = c_of(&agent);
            agent.actor.mean.params_mut()[p] = orig;
            let fd = lambda * (up - down) / (2.0 * h);
            let analytic = g_with.actor_grads[p] - g_without.actor_grads[p];
            assert_abs_diff_eq!(analytic, fd, epsilon = 1e-6);
        }
        // At the collection parameters the reparameterized action equals
        // the stored action, so reg_c equals the literal regularizer.
        let data = &rollouts.agents[agent_idx];
        let literal: f64 = idxs
            .iter()
            .map(|&i| data.actions[i].iter().map(|a| a * a).sum::<f64>())
            .sum::<f64>()
            / rollouts.sample_count() as f64;
        assert_abs_diff_eq!(g_with.reg_c, literal, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_update_matches_independent_agents_at_lambda_zero() {
        let mut cfg = small_cfg();
        cfg.trainer.reg_weight = 0.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
        let rollouts = make_rollouts(&cfg, &bundle, 21);
        let order = minibatch_order(rollouts.sample_count(), 2, 2, &mut rng);

        let mut independent = bundle.clone();
        total_update_with_order(&mut bundle, &rollouts, &cfg.trainer, &order).unwrap();
        for a in 0..3 {
            update_single_agent_with_order(
                &mut independent.agents[a],
                &rollouts,
                a,
                &cfg.trainer,
                &order,
            )
            .unwrap();
        }
        for a in 0..3 {
            assert_eq!(
                bundle.agents[a].actor_params_vec(),
                independent.agents[a].actor_params_vec(),
                "actor params diverged for agent {a}"
            );
            assert_eq!(
                bundle.agents[a].critic.params(),
                independent.agents[a].critic.params(),
                "critic params diverged for agent {a}"
            );
        }
    }

    #[test]
    fn total_loss_identity_holds() {
        let cfg = small_cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
        let rollouts = make_rollouts(&cfg, &bundle, 13);
        let stats = total_update(&mut bundle, &rollouts, &cfg.trainer, &mut rng).unwrap();
        let lhs = stats.total_loss;
        let rhs = stats.agent_losses.iter().sum::<f64>() + cfg.trainer.reg_weight * stats.reg_c;
        assert!((lhs - rhs).abs() < 1e-12, "identity violated: {lhs} vs {rhs}");
        assert!(stats.clip_fraction >= 0.0 && stats.clip_fraction <= 1.0);
    }

    #[test]
    fn update_is_deterministic_given_seed() {
        let cfg = small_cfg();
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
            let mut bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
            let rollouts = make_rollouts(&cfg, &bundle, 17);
            let stats = total_update(&mut bundle, &rollouts, &cfg.trainer, &mut rng).unwrap();
            (bundle.agents[0].actor_params_vec(), stats)
        };
        let (p1, s1) = run();
        let (p2, s2) = run();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn non_finite_rollout_values_abort_and_restore() {
        let cfg = small_cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let mut bundle = PolicyBundle::new(&cfg, decoupled_specs(), &mut rng);
        let mut rollouts = make_rollouts(&cfg, &bundle, 23);
        for v in rollouts.agents[1].returns.iter_mut() {
            *v = f64::INFINITY;
        }
        let before = bundle.clone();
        let err = total_update(&mut bundle, &rollouts, &cfg.trainer, &mut rng).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. } | TrainError::Net(_)));
        assert_eq!(bundle, before, "parameters must be restored after an aborted update");
    }

    #[test]
    fn minibatch_order_partitions_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let order = minibatch_order(37, 3, 4, &mut rng);
        assert_eq!(order.len(), 3);
        for epoch in &order {
            assert_eq!(epoch.len(), 4);
            let mut all: Vec<usize> = epoch.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..37).collect::<Vec<_>>());
        }
    }
}
