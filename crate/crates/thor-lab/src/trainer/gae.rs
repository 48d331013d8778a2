//! Per-agent temporal-difference residuals and generalized advantage
//! estimation. Every agent runs this independently on its own reward and
//! value streams; done flags zero the bootstrap across episode boundaries.

/// Backward-recursive GAE over a single environment stream.
///
/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)` with
/// `V(s_T) = bootstrap`, and `adv_t = delta_t + gamma * lambda *
/// (1 - done_t) * adv_{t+1}`. Returns `(advantages, returns)` with
/// `returns = advantages + values` exactly.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    assert_eq!(values.len(), t_len, "values length mismatch");
    assert_eq!(dones.len(), t_len, "dones length mismatch");
    let mut advantages = vec![0.0; t_len];
    let mut tail = 0.0;
    for t in (0..t_len).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 == t_len { bootstrap } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        tail = delta + gamma * lambda * not_done * tail;
        advantages[t] = tail;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}
