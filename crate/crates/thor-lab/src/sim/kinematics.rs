//! Foot-pinned forward kinematics of the six-joint sagittal chain.
//!
//! The chain runs ankle -> knee -> hip -> waist -> shoulder -> elbow ->
//! hand, with the ankle joint pinned at the origin. Joint `i` sits at the
//! start of link `i`; a link's world orientation (from vertical, positive
//! toward +x) is its configured zero offset plus the sum of all joint
//! angles up to and including its own.

use crate::config::JointConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub z: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, z: 0.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    /// Joint positions; `joints[0]` is the pinned ankle at the origin.
    pub joints: [Vec2; 6],
    /// Midpoints of each link (where its mass is lumped).
    pub link_coms: [Vec2; 6],
    /// Distal end of the forearm link: the hand / end effector.
    pub hand: Vec2,
    /// Hip joint position (the "root" whose height is commanded).
    pub hip: Vec2,
    /// World orientation of the torso link, from vertical, + toward +x.
    pub torso_pitch: f64,
    /// Whole-body center of mass.
    pub com: Vec2,
    pub total_mass: f64,
}

/// Index of the joint driving the torso link (the waist).
pub const TORSO_LINK: usize = 3;
/// Index of the joint whose start is the hip (the hip pitch joint drives
/// the pelvis link; it sits at the top of the thigh).
pub const HIP_JOINT: usize = 2;

pub fn forward_kinematics(joints: &[JointConfig], q: &[f64; 6]) -> KinematicState {
    debug_assert_eq!(joints.len(), 6);
    let mut pos = Vec2::ZERO;
    let mut q_sum = 0.0;
    let mut joint_pos = [Vec2::ZERO; 6];
    let mut link_coms = [Vec2::ZERO; 6];
    let mut torso_pitch = 0.0;
    let mut com = Vec2::ZERO;
    let mut total_mass = 0.0;

    for (i, j) in joints.iter().enumerate() {
        joint_pos[i] = pos;
        q_sum += q[i];
        let theta = j.zero_offset + q_sum;
        if i == TORSO_LINK {
            torso_pitch = theta;
        }
        let end = Vec2 { x: pos.x + j.link_length * theta.sin(), z: pos.z + j.link_length * theta.cos() };
        link_coms[i] = Vec2 { x: 0.5 * (pos.x + end.x), z: 0.5 * (pos.z + end.z) };
        com.x += j.link_mass * link_coms[i].x;
        com.z += j.link_mass * link_coms[i].z;
        total_mass += j.link_mass;
        pos = end;
    }
    com.x /= total_mass;
    com.z /= total_mass;

    KinematicState {
        joints: joint_pos,
        link_coms,
        hand: pos,
        hip: joint_pos[HIP_JOINT],
        torso_pitch,
        com,
        total_mass,
    }
}
