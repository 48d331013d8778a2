//! Planar MDP interface types: what the policy sees, what only the critics
//! see, and what a step returns.

use serde::{Deserialize, Serialize};

/// Flattened observation length; the layout below is a wire contract shared
/// by all three agents.
///
/// | index | content                          | scale |
/// |-------|----------------------------------|-------|
/// | 0..6  | joint angles q                   | 1     |
/// | 6..12 | joint velocities dq              | 0.1   |
/// | 12    | torso pitch rate                 | 0.25  |
/// | 13,14 | gravity projection (sin, cos)    | 1     |
/// | 15..21| previous action                  | 1     |
/// | 21    | commanded velocity v_lin_x       | 1     |
/// | 22    | command mode                     | 1     |
/// | 23    | commanded root height            | 1     |
/// | 24..26| upper-body joint targets         | 1     |
pub const OBS_DIM: usize = 26;

/// Flattened privileged-observation length (critic-only inputs).
///
/// | index | content                      | scale |
/// |-------|------------------------------|-------|
/// | 0,1   | base linear velocity (x, z)  | 1     |
/// | 2     | torso pitch                  | 1     |
/// | 3,4   | hand force (Fx, Fz)          | 0.01  |
/// | 5     | force application height     | 1     |
pub const PRIV_DIM: usize = 6;

pub const DQ_OBS_SCALE: f64 = 0.1;
pub const PITCH_RATE_OBS_SCALE: f64 = 0.25;
pub const FORCE_OBS_SCALE: f64 = 0.01;

/// High-level command shared by all agents. Planar reduction keeps the
/// longitudinal velocity, the stand/locomote mode flag, and the root
/// height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub v_lin_x: f64,
    pub mode: u8,
    pub root_height: f64,
}

/// Policy-visible state. One layout for all three agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub q: [f64; 6],
    pub dq: [f64; 6],
    pub base_pitch_rate: f64,
    /// (sin, cos) of the torso pitch: the gravity direction expressed in
    /// the torso frame.
    pub gravity_projection: [f64; 2],
    pub prev_action: [f64; 6],
    pub command: Command,
    pub upper_targets: [f64; 2],
}

impl Observation {
    pub fn flatten(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[..6].copy_from_slice(&self.q);
        for (i, v) in self.dq.iter().enumerate() {
            out[6 + i] = v * DQ_OBS_SCALE;
        }
        out[12] = self.base_pitch_rate * PITCH_RATE_OBS_SCALE;
        out[13] = self.gravity_projection[0];
        out[14] = self.gravity_projection[1];
        out[15..21].copy_from_slice(&self.prev_action);
        out[21] = self.command.v_lin_x;
        out[22] = self.command.mode as f64;
        out[23] = self.command.root_height;
        out[24] = self.upper_targets[0];
        out[25] = self.upper_targets[1];
        out
    }
}

/// Critic-only inputs: true base velocity, true torso pitch, and the
/// applied hand force with its application height. Never fed to actors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedObs {
    pub base_lin_vel: [f64; 2],
    pub torso_pitch: f64,
    /// (Fx, Fz) of the external force on the hand, N.
    pub hand_force: [f64; 2],
    /// Height of the force application point, m.
    pub hand_height: f64,
}

impl PrivilegedObs {
    pub fn flatten(&self) -> [f64; PRIV_DIM] {
        [
            self.base_lin_vel[0],
            self.base_lin_vel[1],
            self.torso_pitch,
            self.hand_force[0] * FORCE_OBS_SCALE,
            self.hand_force[1] * FORCE_OBS_SCALE,
            self.hand_height,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    None,
    ZmpExit,
    PitchLimit,
    Slip,
    Timeout,
}

impl TerminationReason {
    pub fn label(self) -> &'static str {
        match self {
            TerminationReason::None => "none",
            TerminationReason::ZmpExit => "zmp_exit",
            TerminationReason::PitchLimit => "pitch_limit",
            TerminationReason::Slip => "slip",
            TerminationReason::Timeout => "timeout",
        }
    }
}

/// Outcome of one policy step (or a reset, with zero rewards).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub privileged: PrivilegedObs,
    /// Per-agent rewards (lower, waist, upper).
    pub rewards: [f64; 3],
    pub done: bool,
    pub termination_reason: TerminationReason,
}
