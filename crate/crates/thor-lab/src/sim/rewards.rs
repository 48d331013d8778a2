//! Per-agent reward suite.
//!
//! The tilt-tracking term is shared by the lower and waist agents; the rest
//! are conventional tracking kernels and penalties. Every kernel lies in
//! (0, 1], the survival bonus is a constant, and the penalties are bounded
//! by the action box and joint ranges, so each agent's per-step reward sits
//! in a finite, documented interval:
//!
//! * lower: (-w_action_rate*12 - w_joint_limit*S_l,
//!           w_velocity + w_fat2_lower + w_height + w_survival]
//! * waist: (-w_action_rate*4 - w_joint_limit*S_w,
//!           w_fat2_waist + w_waist_posture]
//! * upper: (-w_action_rate*8 - w_joint_limit*S_u, w_upper_tracking]
//!
//! where S_i is the summed joint-range overrun bound of agent i's joints.

use crate::config::{JointConfig, RewardConfig, LOWER_RANGE, UPPER_RANGE, WAIST_RANGE};
use crate::quasistatics::{expected_tilt, fat2_reward, BodyGeometry, HandForce};
use crate::sim::types::Command;
use std::f64::consts::FRAC_PI_2;

/// Everything the reward suite reads from the environment at one step.
#[derive(Debug, Clone)]
pub struct RewardInputs<'a> {
    /// Force applied during the step (privileged).
    pub hand_force: &'a HandForce,
    /// Torso pitch from vertical, positive toward +x.
    pub torso_pitch: f64,
    /// Realized base (hip) longitudinal velocity.
    pub base_vel_x: f64,
    /// Realized hip height.
    pub hip_height: f64,
    pub q: &'a [f64; 6],
    pub actions: &'a [f64; 6],
    pub prev_actions: &'a [f64; 6],
    pub upper_targets: &'a [f64; 2],
    pub command: &'a Command,
}

/// Reward terms plus the per-agent totals; kept around for traces and
/// boundedness tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub beta_target: f64,
    pub beta_actual: f64,
    pub fat2: f64,
    pub velocity_kernel: f64,
    pub height_kernel: f64,
    pub waist_kernel: f64,
    pub upper_kernel: f64,
    /// Action-rate penalties per agent slice (lower, waist, upper).
    pub action_rate: [f64; 3],
    /// Joint-limit overruns per agent slice.
    pub joint_limit: [f64; 3],
    /// Final rewards (lower, waist, upper).
    pub rewards: [f64; 3],
}

fn squared_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

fn slice_action_rate(actions: &[f64; 6], prev: &[f64; 6], range: std::ops::Range<usize>) -> f64 {
    actions[range.clone()]
        .iter()
        .zip(&prev[range])
        .map(|(a, p)| (a - p) * (a - p))
        .sum()
}

/// Overrun of q beyond a soft margin inside the joint range.
fn slice_limit_overrun(q: &[f64; 6], joints: &[JointConfig], range: std::ops::Range<usize>) -> f64 {
    range
        .map(|i| {
            let j = &joints[i];
            let margin = 0.1 * (j.angle_max - j.angle_min);
            let hi = (q[i] - (j.angle_max - margin)).max(0.0);
            let lo = ((j.angle_min + margin) - q[i]).max(0.0);
            hi + lo
        })
        .sum()
}

/// Tilt measured from the ground plane in the lean-against-the-pull sense:
/// pi/2 when upright, smaller when leaning into the correct direction,
/// larger than pi/2 (and thus penalized) when leaning with the pull.
pub fn tilt_from_pitch(torso_pitch: f64, f: &HandForce) -> f64 {
    FRAC_PI_2 + f.direction.sign() * torso_pitch
}

pub fn compute_rewards(
    geom: &BodyGeometry,
    rc: &RewardConfig,
    joints: &[JointConfig],
    inp: &RewardInputs,
) -> RewardBreakdown {
    let beta_target = expected_tilt(geom, inp.hand_force, rc.beta_lim).beta;
    let beta_actual = tilt_from_pitch(inp.torso_pitch, inp.hand_force);
    let fat2 = fat2_reward(beta_target, beta_actual, rc.sigma_tilt);

    let dv = inp.base_vel_x - inp.command.v_lin_x;
    let velocity_kernel = (-(dv * dv) / rc.sigma_velocity).exp();
    let dh = inp.hip_height - inp.command.root_height;
    let height_kernel = (-(dh * dh) / rc.sigma_height).exp();
    let qw = inp.q[3];
    let waist_kernel = (-(qw * qw) / rc.sigma_waist).exp();
    let du = squared_norm(&[inp.q[4] - inp.upper_targets[0], inp.q[5] - inp.upper_targets[1]]);
    let upper_kernel = (-du / rc.sigma_upper).exp();

    let action_rate = [
        slice_action_rate(inp.actions, inp.prev_actions, LOWER_RANGE),
        slice_action_rate(inp.actions, inp.prev_actions, WAIST_RANGE),
        slice_action_rate(inp.actions, inp.prev_actions, UPPER_RANGE),
    ];
    let joint_limit = [
        slice_limit_overrun(inp.q, joints, LOWER_RANGE),
        slice_limit_overrun(inp.q, joints, WAIST_RANGE),
        slice_limit_overrun(inp.q, joints, UPPER_RANGE),
    ];

    let r_lower = rc.w_velocity * velocity_kernel
        + rc.w_fat2_lower * fat2
        + rc.w_height * height_kernel
        + rc.w_survival
        - rc.w_action_rate * action_rate[0]
        - rc.w_joint_limit * joint_limit[0];
    let r_waist = rc.w_fat2_waist * fat2 + rc.w_waist_posture * waist_kernel
        - rc.w_action_rate * action_rate[1]
        - rc.w_joint_limit * joint_limit[1];
    let r_upper = rc.w_upper_tracking * upper_kernel
        - rc.w_action_rate * action_rate[2]
        - rc.w_joint_limit * joint_limit[2];

    RewardBreakdown {
        beta_target,
        beta_actual,
        fat2,
        velocity_kernel,
        height_kernel,
        waist_kernel,
        upper_kernel,
        action_rate,
        joint_limit,
        rewards: [r_lower, r_waist, r_upper],
    }
}
