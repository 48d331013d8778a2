//! Planar quasi-static humanoid MDP.
//!
//! Six actuated pitch joints (ankle, knee, hip | waist | shoulder, elbow)
//! form a sagittal chain pinned to the ground at the ankle. Policies run at
//! 50 Hz and command desired joint-angle offsets around the nominal pose; a
//! 500 Hz PD inner loop (10 substeps per policy step) servos each joint,
//! with gravity and the external hand force applying load torques about
//! every joint from the current kinematics. Balance is a zero-moment-point
//! interval test plus a Coulomb slip check, evaluated every substep.
//!
//! Episodes terminate on a ZMP excursion that lasts longer than the grace
//! window (or is still in progress at a policy-step boundary), on a torso
//! pitch beyond the configured limit, on foot slip, or on timeout.
//!
//! Each environment instance owns its state and RNG exclusively; a
//! vectorized harness may run many instances side by side as long as no
//! instance is shared. All randomness derives from the reset seed, so a
//! given (seed, action sequence) pair reproduces a trajectory bit-exactly.

pub mod forces;
pub mod kinematics;
pub mod rewards;
pub mod types;

pub use forces::{EpisodeForce, UpperTargets};
pub use kinematics::{forward_kinematics, KinematicState};
pub use rewards::{compute_rewards, tilt_from_pitch, RewardBreakdown, RewardInputs};
pub use types::{
    Command, Observation, PrivilegedObs, StepResult, TerminationReason, OBS_DIM, PRIV_DIM,
};

use crate::config::{RunConfig, NUM_JOINTS};
use crate::quasistatics::{solve_support_reactions, zmp_location, BodyGeometry, HandForce};
use crate::rng::RngState;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("episode already terminated ({0:?}); reset before stepping")]
    EpisodeDone(TerminationReason),
    #[error("non-finite action at index {0}")]
    NonFiniteAction(usize),
}

/// Curriculum stages: bounded stage-1 disturbances, extreme stage-2 ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurriculumStage {
    Stage1,
    Stage2,
}

impl CurriculumStage {
    pub fn index(self) -> u8 {
        match self {
            CurriculumStage::Stage1 => 1,
            CurriculumStage::Stage2 => 2,
        }
    }
}

/// PD servo law: kp*(q_des - q) - kd*dq, clamped to the torque limit.
pub fn pd_torque(q_des: f64, q: f64, dq: f64, kp: f64, kd: f64, torque_limit: f64) -> f64 {
    (kp * (q_des - q) - kd * dq).clamp(-torque_limit, torque_limit)
}

/// Gravity load torque about joint `j` from every link at or above it.
fn gravity_torque_about(
    joints: &[crate::config::JointConfig],
    fk: &KinematicState,
    j: usize,
    gravity_accel: f64,
) -> f64 {
    let p = fk.joints[j];
    (j..NUM_JOINTS)
        .map(|k| joints[k].link_mass * gravity_accel * (fk.link_coms[k].x - p.x))
        .sum()
}

/// One row of the optional per-episode trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u32,
    pub q: [f64; 6],
    pub torso_pitch: f64,
    pub force_n: f64,
    pub zmp_x: f64,
    pub rewards: [f64; 3],
    pub done: bool,
}

/// Write a trace as CSV (one row per policy step).
pub fn write_trace_csv<W: std::io::Write>(mut w: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "t,q0,q1,q2,q3,q4,q5,torso_pitch,force_n,zmp_x,r_lower,r_waist,r_upper,done")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.q[0],
            r.q[1],
            r.q[2],
            r.q[3],
            r.q[4],
            r.q[5],
            r.torso_pitch,
            r.force_n,
            r.zmp_x,
            r.rewards[0],
            r.rewards[1],
            r.rewards[2],
            r.done as u8
        )?;
    }
    Ok(())
}

/// Complete serializable environment state; checkpointing an env and
/// restoring it continues the exact same trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    q: [f64; 6],
    dq: [f64; 6],
    prev_action: [f64; 6],
    episode_step: u32,
    stage: CurriculumStage,
    force: EpisodeForce,
    upper: Option<UpperTargets>,
    rng: RngState,
    zmp_streak: u32,
    done: bool,
    termination: TerminationReason,
    prev_hip: [f64; 2],
    force_override: Option<EpisodeForce>,
    initialized: bool,
    substeps_executed: u64,
}

/// The planar humanoid environment.
pub struct Env {
    cfg: RunConfig,
    /// Lumped-body view of the articulated chain used for the in-sim
    /// balance test; mass comes from the links, support/friction from the
    /// configured geometry.
    lumped: BodyGeometry,
    /// Gravity load torques at the nominal pose; the servos feed these
    /// forward, so only gravity *changes* (from leaning or arm motion)
    /// load the joints.
    tau_gravity_nominal: [f64; 6],
    q: [f64; 6],
    dq: [f64; 6],
    prev_action: [f64; 6],
    episode_step: u32,
    stage: CurriculumStage,
    force: EpisodeForce,
    upper: Option<UpperTargets>,
    rng: ChaCha8Rng,
    zmp_streak: u32,
    done: bool,
    termination: TerminationReason,
    prev_hip: [f64; 2],
    force_override: Option<EpisodeForce>,
    initialized: bool,
    substeps_executed: u64,
    trace: Option<Vec<TraceRow>>,
    last_zmp: f64,
    last_slip: bool,
}

impl Env {
    pub fn new(cfg: &RunConfig) -> Self {
        let fk = forward_kinematics(&cfg.sim.joints, &[0.0; 6]);
        let lumped = BodyGeometry { total_mass: fk.total_mass, ..cfg.geometry.clone() };
        let mut tau_gravity_nominal = [0.0; 6];
        for (j, tau) in tau_gravity_nominal.iter_mut().enumerate() {
            *tau = gravity_torque_about(&cfg.sim.joints, &fk, j, cfg.geometry.gravity_accel);
        }
        Self {
            cfg: cfg.clone(),
            lumped,
            tau_gravity_nominal,
            q: [0.0; 6],
            dq: [0.0; 6],
            prev_action: [0.0; 6],
            episode_step: 0,
            stage: CurriculumStage::Stage1,
            force: EpisodeForce::zero(),
            upper: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            zmp_streak: 0,
            done: false,
            termination: TerminationReason::None,
            prev_hip: [0.0; 2],
            force_override: None,
            initialized: false,
            substeps_executed: 0,
            trace: None,
            last_zmp: 0.0,
            last_slip: false,
        }
    }

    /// Force every episode (until cleared) to use a fixed external-force
    /// profile instead of the stage distribution. Used by the evaluation
    /// protocols.
    pub fn set_force_override(&mut self, force: Option<EpisodeForce>) {
        self.force_override = force;
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.take().unwrap_or_default()
    }

    /// Reseed and start a fresh episode in the given curriculum stage.
    /// Deterministic: the same seed yields a bit-identical episode.
    pub fn reset(&mut self, seed: u64, stage: CurriculumStage) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.stage = stage;
        self.initialized = true;
        self.reset_episode()
    }

    /// Start a fresh episode continuing the current RNG stream (used for
    /// auto-reset between episodes of one training run).
    pub fn reset_episode(&mut self) -> StepResult {
        assert!(self.initialized, "reset(seed, stage) must be called first");
        let sim = &self.cfg.sim;
        for i in 0..NUM_JOINTS {
            let j = &sim.joints[i];
            let jitter = self.rng.gen_range(-sim.reset_jitter..=sim.reset_jitter);
            self.q[i] = jitter.clamp(j.angle_min, j.angle_max);
        }
        self.dq = [0.0; 6];
        self.prev_action = [0.0; 6];
        self.episode_step = 0;
        self.zmp_streak = 0;
        self.done = false;
        self.termination = TerminationReason::None;
        let schedule = match self.stage {
            CurriculumStage::Stage1 => &sim.stage1,
            CurriculumStage::Stage2 => &sim.stage2,
        };
        self.force = match &self.force_override {
            Some(f) => f.clone(),
            None => EpisodeForce::sample(schedule, &mut self.rng),
        };
        self.upper =
            Some(UpperTargets::sample(&sim.joints, sim.upper_target_amplitude, &mut self.rng));
        let fk = forward_kinematics(&sim.joints, &self.q);
        self.prev_hip = [fk.hip.x, fk.hip.z];
        self.last_zmp = 0.0;
        self.last_slip = false;
        if let Some(trace) = &mut self.trace {
            trace.clear();
        }
        self.observe(&fk, [0.0; 2], [0.0; 3])
    }

    /// Advance one policy step. Actions are clamped into [-1, 1] and mapped
    /// to desired joint-angle offsets around the nominal pose; the PD inner
    /// loop then runs `pd_substeps` substeps.
    pub fn step(&mut self, actions: &[f64; 6]) -> Result<StepResult, SimError> {
        if !self.initialized {
            return Err(SimError::NotReset);
        }
        if self.done {
            return Err(SimError::EpisodeDone(self.termination));
        }
        if let Some(i) = actions.iter().position(|a| !a.is_finite()) {
            return Err(SimError::NonFiniteAction(i));
        }

        let sim = self.cfg.sim.clone();
        let mut a = [0.0; 6];
        let mut q_des = [0.0; 6];
        for i in 0..NUM_JOINTS {
            let j = &sim.joints[i];
            a[i] = actions[i].clamp(-1.0, 1.0);
            q_des[i] = (a[i] * j.action_scale).clamp(j.angle_min, j.angle_max);
        }

        let hand_force = self.force.at_step(self.episode_step);
        let f_vec = [hand_force.horizontal(), -hand_force.vertical_load()];
        let dt = sim.policy_dt / sim.pd_substeps as f64;
        let mut fk = forward_kinematics(&sim.joints, &self.q);

        for _ in 0..sim.pd_substeps {
            self.substeps_executed += 1;
            // Per-joint servo with gravity (relative to the nominal-pose
            // feedforward) and hand-force load torques taken about each
            // joint from the current kinematics.
            let mut tau_ext = [0.0; 6];
            for j in 0..NUM_JOINTS {
                let p = fk.joints[j];
                let mut tau = gravity_torque_about(
                    &sim.joints,
                    &fk,
                    j,
                    self.cfg.geometry.gravity_accel,
                ) - self.tau_gravity_nominal[j];
                tau += (fk.hand.z - p.z) * f_vec[0] - (fk.hand.x - p.x) * f_vec[1];
                tau_ext[j] = tau;
            }
            for i in 0..NUM_JOINTS {
                let j = &sim.joints[i];
                let tau_pd = pd_torque(q_des[i], self.q[i], self.dq[i], j.kp, j.kd, j.torque_limit);
                let acc = (tau_pd + tau_ext[i]) / j.inertia;
                self.dq[i] += acc * dt;
                self.q[i] += self.dq[i] * dt;
                if self.q[i] < j.angle_min {
                    self.q[i] = j.angle_min;
                    self.dq[i] = self.dq[i].max(0.0);
                } else if self.q[i] > j.angle_max {
                    self.q[i] = j.angle_max;
                    self.dq[i] = self.dq[i].min(0.0);
                }
            }
            fk = forward_kinematics(&sim.joints, &self.q);

            if fk.torso_pitch.abs() > sim.pitch_limit {
                self.finish(TerminationReason::PitchLimit);
                break;
            }
            let reactions = solve_support_reactions(&self.lumped, &hand_force);
            self.last_slip = reactions.slip;
            if reactions.slip {
                self.finish(TerminationReason::Slip);
                break;
            }
            let ee_height = fk.hand.z.max(0.01);
            let zmp = zmp_location(&self.lumped, &hand_force, fk.com.x, ee_height)
                .expect("total vertical load is positive");
            self.last_zmp = zmp;
            if zmp < self.lumped.support_min || zmp > self.lumped.support_max {
                self.zmp_streak += 1;
                if self.zmp_streak > sim.zmp_grace_substeps {
                    self.finish(TerminationReason::ZmpExit);
                    break;
                }
            } else {
                self.zmp_streak = 0;
            }
        }
        // An excursion still in progress at the policy-step boundary
        // terminates: a non-terminal step always ends inside the support.
        if !self.done && self.zmp_streak > 0 {
            self.finish(TerminationReason::ZmpExit);
        }

        let step_of_reward = self.episode_step;
        self.episode_step += 1;
        if !self.done && self.episode_step >= sim.horizon {
            self.finish(TerminationReason::Timeout);
        }

        let base_vel = [
            (fk.hip.x - self.prev_hip[0]) / sim.policy_dt,
            (fk.hip.z - self.prev_hip[1]) / sim.policy_dt,
        ];
        self.prev_hip = [fk.hip.x, fk.hip.z];

        let upper_targets =
            self.upper.as_ref().expect("episode initialized").at_step(step_of_reward);
        let inputs = RewardInputs {
            hand_force: &hand_force,
            torso_pitch: fk.torso_pitch,
            base_vel_x: base_vel[0],
            hip_height: fk.hip.z,
            q: &self.q,
            actions: &a,
            prev_actions: &self.prev_action,
            upper_targets: &upper_targets,
            command: &self.command(),
        };
        let breakdown = compute_rewards(&self.cfg.geometry, &self.cfg.reward, &sim.joints, &inputs);
        self.prev_action = a;

        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                t: step_of_reward,
                q: self.q,
                torso_pitch: fk.torso_pitch,
                force_n: hand_force.magnitude,
                zmp_x: self.last_zmp,
                rewards: breakdown.rewards,
                done: self.done,
            });
        }

        Ok(self.observe(&fk, base_vel, breakdown.rewards))
    }

    fn finish(&mut self, reason: TerminationReason) {
        self.done = true;
        self.termination = reason;
    }

    fn command(&self) -> Command {
        let c = &self.cfg.sim.command;
        Command { v_lin_x: c.v_lin_x, mode: c.mode, root_height: c.root_height }
    }

    fn observe(&self, fk: &KinematicState, base_vel: [f64; 2], rewards: [f64; 3]) -> StepResult {
        let force_next = self.force.at_step(self.episode_step);
        let upper_targets =
            self.upper.as_ref().expect("episode initialized").at_step(self.episode_step);
        let observation = Observation {
            q: self.q,
            dq: self.dq,
            base_pitch_rate: self.dq[..4].iter().sum(),
            gravity_projection: [fk.torso_pitch.sin(), fk.torso_pitch.cos()],
            prev_action: self.prev_action,
            command: self.command(),
            upper_targets,
        };
        let privileged = PrivilegedObs {
            base_lin_vel: base_vel,
            torso_pitch: fk.torso_pitch,
            hand_force: [force_next.horizontal(), -force_next.vertical_load()],
            hand_height: fk.hand.z,
        };
        StepResult {
            observation,
            privileged,
            rewards,
            done: self.done,
            termination_reason: self.termination,
        }
    }

    // --- introspection used by evaluation protocols and tests ---

    pub fn policy_dt(&self) -> f64 {
        self.cfg.sim.policy_dt
    }

    pub fn horizon(&self) -> u32 {
        self.cfg.sim.horizon
    }

    pub fn episode_step(&self) -> u32 {
        self.episode_step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn termination(&self) -> TerminationReason {
        self.termination
    }

    pub fn stage(&self) -> CurriculumStage {
        self.stage
    }

    pub fn substeps_executed(&self) -> u64 {
        self.substeps_executed
    }

    pub fn last_zmp(&self) -> f64 {
        self.last_zmp
    }

    pub fn kinematics(&self) -> KinematicState {
        forward_kinematics(&self.cfg.sim.joints, &self.q)
    }

    pub fn torso_pitch(&self) -> f64 {
        self.kinematics().torso_pitch
    }

    pub fn applied_force(&self) -> HandForce {
        self.force.at_step(self.episode_step)
    }

    /// Freeze the chain at an exact pose (testing/verification hook).
    pub fn set_pose(&mut self, q: &[f64; 6]) {
        self.q = *q;
        self.dq = [0.0; 6];
        self.initialized = true;
        self.done = false;
        self.termination = TerminationReason::None;
        if self.upper.is_none() {
            self.upper = Some(UpperTargets::sample(
                &self.cfg.sim.joints,
                0.0,
                &mut ChaCha8Rng::seed_from_u64(0),
            ));
        }
    }

    /// The simulator's internal ZMP for the current pose under a given
    /// force: lumped total mass from the links, CoM and hand height from
    /// the articulated kinematics.
    pub fn internal_zmp(&self, f: &HandForce) -> f64 {
        let fk = self.kinematics();
        zmp_location(&self.lumped, f, fk.com.x, fk.hand.z.max(0.01))
            .expect("total vertical load is positive")
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            q: self.q,
            dq: self.dq,
            prev_action: self.prev_action,
            episode_step: self.episode_step,
            stage: self.stage,
            force: self.force.clone(),
            upper: self.upper.clone(),
            rng: RngState::capture(&self.rng),
            zmp_streak: self.zmp_streak,
            done: self.done,
            termination: self.termination,
            prev_hip: self.prev_hip,
            force_override: self.force_override.clone(),
            initialized: self.initialized,
            substeps_executed: self.substeps_executed,
        }
    }

    pub fn restore(cfg: &RunConfig, snap: &EnvSnapshot) -> Self {
        let mut env = Self::new(cfg);
        env.q = snap.q;
        env.dq = snap.dq;
        env.prev_action = snap.prev_action;
        env.episode_step = snap.episode_step;
        env.stage = snap.stage;
        env.force = snap.force.clone();
        env.upper = snap.upper.clone();
        env.rng = snap.rng.restore();
        env.zmp_streak = snap.zmp_streak;
        env.done = snap.done;
        env.termination = snap.termination;
        env.prev_hip = snap.prev_hip;
        env.force_override = snap.force_override.clone();
        env.initialized = snap.initialized;
        env.substeps_executed = snap.substeps_executed;
        env
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasistatics::PullDirection;
    use approx::assert_abs_diff_eq;

    fn stand_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.sim.stage1.base_magnitude = 0.0;
        cfg.sim.stage1.magnitude_std = 0.0;
        cfg.sim.stage1.magnitude_cap = Some(0.0);
        cfg
    }

    #[test]
    fn pd_torque_contract() {
        assert_eq!(pd_torque(0.3, 0.3, 0.0, 60.0, 2.0, 20.0), 0.0);
        assert_abs_diff_eq!(pd_torque(0.1, 0.0, 0.0, 60.0, 2.0, 20.0), 6.0, epsilon = 1e-12);
        assert_eq!(pd_torque(1.0, 0.0, 0.0, 35.0, 0.0, 20.0), 20.0);
        assert_eq!(pd_torque(-1.0, 0.0, 0.0, 35.0, 0.0, 20.0), -20.0);
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let cfg = RunConfig::default();
        let mut a = Env::new(&cfg);
        let mut b = Env::new(&cfg);
        let ra = a.reset(42, CurriculumStage::Stage2);
        let rb = b.reset(42, CurriculumStage::Stage2);
        assert_eq!(ra, rb);
        assert_eq!(
            serde_json::to_string(&a.snapshot()).unwrap(),
            serde_json::to_string(&b.snapshot()).unwrap()
        );
    }

    #[test]
    fn trajectory_determined_by_seed_and_actions() {
        let cfg = RunConfig::default();
        let run = || {
            let mut env = Env::new(&cfg);
            let mut out = vec![env.reset(7, CurriculumStage::Stage1)];
            for k in 0..40 {
                let a = [(k as f64 * 0.1).sin() * 0.2; 6];
                match env.step(&a) {
                    Ok(r) => {
                        let done = r.done;
                        out.push(r);
                        if done {
                            out.push(env.reset_episode());
                        }
                    }
                    Err(e) => panic!("unexpected sim error: {e}"),
                }
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn static_stand_stays_balanced() {
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        env.reset(3, CurriculumStage::Stage1);
        for _ in 0..100 {
            let r = env.step(&[0.0; 6]).unwrap();
            assert!(!r.done, "fell during a zero-force static stand");
            let zmp = env.last_zmp();
            assert!(zmp >= cfg.geometry.support_min && zmp <= cfg.geometry.support_max);
            for v in r.observation.flatten() {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn exactly_ten_substeps_per_policy_step() {
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        env.reset(3, CurriculumStage::Stage1);
        let before = env.substeps_executed();
        for _ in 0..5 {
            env.step(&[0.0; 6]).unwrap();
        }
        assert_eq!(env.substeps_executed() - before, 50);
    }

    #[test]
    fn stepping_done_episode_errors() {
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        env.reset(3, CurriculumStage::Stage1);
        // Drive the torso past the pitch limit with a scripted full-lean
        // command on every joint.
        let mut terminated = false;
        for _ in 0..400 {
            let r = env.step(&[1.0; 6]).unwrap();
            if r.done {
                assert_eq!(r.termination_reason, TerminationReason::PitchLimit);
                terminated = true;
                break;
            }
        }
        assert!(terminated, "full-lean script should hit the pitch limit");
        assert!(matches!(env.step(&[0.0; 6]), Err(SimError::EpisodeDone(_))));
    }

    #[test]
    fn step_before_reset_errors() {
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        assert!(matches!(env.step(&[0.0; 6]), Err(SimError::NotReset)));
    }

    #[test]
    fn non_finite_action_errors() {
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        env.reset(3, CurriculumStage::Stage1);
        let mut a = [0.0; 6];
        a[2] = f64::NAN;
        assert!(matches!(env.step(&a), Err(SimError::NonFiniteAction(2))));
    }

    #[test]
    fn ramped_overload_exits_through_zmp() {
        // A fixed upright pose under a ramp past the interactive-force
        // envelope must fail the ZMP interval test.
        let mut cfg = stand_cfg();
        cfg.sim.horizon = 2000;
        let mut env = Env::new(&cfg);
        env.set_force_override(Some(EpisodeForce {
            magnitude: 150.0,
            angle: 0.0,
            direction: PullDirection::TowardPosX,
            ramp_steps: 300,
        }));
        env.reset(5, CurriculumStage::Stage1);
        let mut reason = TerminationReason::None;
        for _ in 0..2000 {
            match env.step(&[0.0; 6]) {
                Ok(r) if r.done => {
                    reason = r.termination_reason;
                    break;
                }
                Ok(_) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert_eq!(reason, TerminationReason::ZmpExit);
    }

    #[test]
    fn slip_terminates_on_low_friction() {
        let mut cfg = stand_cfg();
        cfg.geometry.friction_coeff = 0.05;
        let mut env = Env::new(&cfg);
        env.set_force_override(Some(EpisodeForce {
            magnitude: 60.0,
            angle: 0.0,
            direction: PullDirection::TowardPosX,
            ramp_steps: 10,
        }));
        env.reset(5, CurriculumStage::Stage1);
        let mut reason = TerminationReason::None;
        for _ in 0..200 {
            match env.step(&[0.0; 6]) {
                Ok(r) if r.done => {
                    reason = r.termination_reason;
                    break;
                }
                Ok(_) => {}
                Err(e) => panic!("{e}"),
            }
        }
        assert_eq!(reason, TerminationReason::Slip);
    }

    #[test]
    fn timeout_reports_its_reason() {
        let mut cfg = stand_cfg();
        cfg.sim.horizon = 6;
        let mut env = Env::new(&cfg);
        env.reset(1, CurriculumStage::Stage1);
        let mut last = None;
        for _ in 0..6 {
            last = Some(env.step(&[0.0; 6]).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done);
        assert_eq!(last.termination_reason, TerminationReason::Timeout);
    }

    #[test]
    fn desired_angles_respect_position_limits() {
        // Saturated actions never command a desired angle beyond the joint
        // range: the clamped target keeps q inside limits over a long roll.
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        env.reset(9, CurriculumStage::Stage1);
        for k in 0..200 {
            let a = if k % 2 == 0 { [5.0; 6] } else { [-5.0; 6] };
            match env.step(&a) {
                Ok(r) => {
                    for (i, q) in r.observation.q.iter().enumerate() {
                        let j = &cfg.sim.joints[i];
                        assert!(
                            *q >= j.angle_min - 1e-12 && *q <= j.angle_max + 1e-12,
                            "joint {i} left its range: {q}"
                        );
                    }
                    if r.done {
                        break;
                    }
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn snapshot_restore_continues_identically() {
        let cfg = RunConfig::default();
        let mut env = Env::new(&cfg);
        env.reset(11, CurriculumStage::Stage2);
        for _ in 0..7 {
            if env.step(&[0.05; 6]).unwrap().done {
                env.reset_episode();
            }
        }
        let snap = env.snapshot();
        let mut twin = Env::restore(&cfg, &snap);
        for k in 0..30 {
            let a = [0.02 * (k as f64).cos(); 6];
            let ra = env.step(&a);
            let rb = twin.step(&a);
            assert_eq!(ra, rb);
            if let Ok(r) = ra {
                if r.done {
                    assert_eq!(env.reset_episode(), twin.reset_episode());
                }
            }
        }
    }

    #[test]
    fn internal_zmp_matches_reset_observation_scale() {
        let cfg = stand_cfg();
        let mut env = Env::new(&cfg);
        env.reset(2, CurriculumStage::Stage1);
        let f = HandForce::zero();
        let zmp = env.internal_zmp(&f);
        // Near-nominal pose with no force: ZMP sits a hair in front of the
        // ankle because the arms reach forward.
        assert!(zmp.abs() < 0.05, "zmp {zmp}");
    }
}
