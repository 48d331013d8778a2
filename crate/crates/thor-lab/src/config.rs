//! Run configuration: one JSON document covering geometry, simulator,
//! reward, network, trainer, and evaluation parameters.
//!
//! Resolution order is defaults <- file <- command-line overrides. The
//! resolved document is validated against every type invariant and hashed
//! (SHA-256 of its canonical JSON); the hash is stamped into every output
//! artifact and checkpoint so results can be traced back to an exact
//! configuration.

use crate::quasistatics::BodyGeometry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use thiserror::Error;

/// Actuated joints, concatenated as [lower(3) | waist(1) | upper(2)].
pub const NUM_JOINTS: usize = 6;
pub const LOWER_RANGE: std::ops::Range<usize> = 0..3;
pub const WAIST_RANGE: std::ops::Range<usize> = 3..4;
pub const UPPER_RANGE: std::ops::Range<usize> = 4..6;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    MissingFile(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("config invariant violated: {0}")]
    Invariant(String),
}

impl ConfigError {
    /// Process exit code for this error class (see the CLI exit-code table).
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::MissingFile(_) => 2,
            ConfigError::Parse(_) => 3,
            ConfigError::UnknownKey(_) => 4,
            ConfigError::Invariant(_) => 5,
        }
    }
}

/// One actuated joint of the planar chain plus the link it drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub name: String,
    /// Length of the link driven by this joint, m.
    pub link_length: f64,
    /// Mass of that link, lumped at its midpoint, kg.
    pub link_mass: f64,
    /// Orientation offset of the link from vertical at q = 0, rad.
    pub zero_offset: f64,
    pub angle_min: f64,
    pub angle_max: f64,
    /// Actuator torque limit, N*m.
    pub torque_limit: f64,
    pub kp: f64,
    pub kd: f64,
    /// Effective inertia seen by this joint's servo, kg*m^2.
    pub inertia: f64,
    /// Desired-angle offset per unit action, rad.
    pub action_scale: f64,
}

fn joint(
    name: &str,
    link_length: f64,
    link_mass: f64,
    zero_offset: f64,
    limits: (f64, f64),
    torque_limit: f64,
    kp: f64,
    kd: f64,
    inertia: f64,
    action_scale: f64,
) -> JointConfig {
    JointConfig {
        name: name.to_string(),
        link_length,
        link_mass,
        zero_offset,
        angle_min: limits.0,
        angle_max: limits.1,
        torque_limit,
        kp,
        kd,
        inertia,
        action_scale,
    }
}

/// Gaussian force-disturbance distribution plus its in-episode profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceScheduleConfig {
    /// Mean of the sampled magnitude, N.
    pub base_magnitude: f64,
    /// Std of the sampled magnitude, N.
    pub magnitude_std: f64,
    /// Hard cap on the sampled magnitude, N (samples are clamped into
    /// [0, cap]); `null` means uncapped above zero.
    pub magnitude_cap: Option<f64>,
    /// Mean force-line angle from the ground, rad.
    pub angle_mean: f64,
    /// Std of the force-line angle, rad.
    pub angle_std: f64,
    /// Policy steps over which the force ramps from zero to its magnitude.
    pub ramp_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    /// Fixed longitudinal velocity command, m/s (stand tasks use 0).
    pub v_lin_x: f64,
    /// 0 = stand, 1 = locomote (changes only the velocity target).
    pub mode: u8,
    /// Commanded root (hip) height, m.
    pub root_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Policy period, s (50 Hz).
    pub policy_dt: f64,
    /// PD substeps per policy step (500 Hz inner loop).
    pub pd_substeps: u32,
    /// Episode timeout in policy steps.
    pub horizon: u32,
    /// Uniform joint jitter at reset, rad.
    pub reset_jitter: f64,
    /// Torso-pitch magnitude that terminates the episode, rad.
    pub pitch_limit: f64,
    /// Consecutive substeps the ZMP may leave the support interval before
    /// the episode terminates (excursions still in progress at a policy
    /// step boundary terminate regardless).
    pub zmp_grace_substeps: u32,
    pub joints: Vec<JointConfig>,
    pub command: CommandConfig,
    /// Stage-1 (low-force) disturbance distribution.
    pub stage1: ForceScheduleConfig,
    /// Stage-2 (extreme-force) disturbance distribution.
    pub stage2: ForceScheduleConfig,
    /// Scale on the procedural upper-body target amplitude (0 freezes the
    /// targets at the nominal pose).
    pub upper_target_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Lean limit beta_lim, rad; admissible tilt is [beta_lim, pi/2].
    pub beta_lim: f64,
    /// Tilt-kernel temperature sigma_t, rad^2.
    pub sigma_tilt: f64,
    pub w_velocity: f64,
    pub sigma_velocity: f64,
    pub w_fat2_lower: f64,
    pub w_fat2_waist: f64,
    pub w_height: f64,
    pub sigma_height: f64,
    pub w_survival: f64,
    pub w_waist_posture: f64,
    pub sigma_waist: f64,
    pub w_upper_tracking: f64,
    pub sigma_upper: f64,
    pub w_action_rate: f64,
    pub w_joint_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Hidden widths; the desk-scale default keeps CI runs in minutes.
    /// The full-scale [512, 256, 128] stack is a config choice away.
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Output-layer init gain; small so initial actions sit near zero.
    pub output_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub iterations: u32,
    pub learning_rate: f64,
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub gae_lambda: f64,
    /// Action-regularization weight lambda_c.
    pub reg_weight: f64,
    /// Regularize the PD-torque proxy instead of raw actions.
    pub regularize_pd_torque: bool,
    pub rollout_len: u32,
    pub minibatches: u32,
    pub epochs: u32,
    pub env_count: u32,
    /// Iteration at which the curriculum switches from stage 1 to stage 2.
    pub curriculum_switch: u32,
    pub grad_clip: f64,
    pub adv_norm_eps: f64,
    /// Iterations between periodic checkpoints (0 disables).
    pub checkpoint_interval: u32,
    /// Train a single monolithic agent over all six actions instead of the
    /// decoupled lower/waist/upper split.
    pub monolithic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Static-hold duration per force probe, s (scaled-down CI default;
    /// set 10.0 for the full protocol).
    pub hold_seconds: f64,
    /// Force ramp rate while approaching a probe magnitude, N/s.
    pub ramp_rate: f64,
    /// Number of measurement seeds (mean +- SE reporting).
    pub seeds: u32,
    /// Bisection stops when the sustained/failed bracket is this tight, N.
    pub bisection_resolution: f64,
    /// Force grid for the tilt sweep, N, ascending.
    pub sweep_forces: Vec<f64>,
    /// Episode length of each sweep point, policy steps.
    pub sweep_episode_len: u32,
    /// Upper-body target amplitude during measurements (0 = arms held).
    pub upper_target_amplitude: f64,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: BodyGeometry,
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub net: NetConfig,
    pub trainer: TrainerConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            geometry: BodyGeometry {
                total_mass: 35.0,
                gravity_accel: 9.81,
                com_distance: 0.45,
                ee_distance: 1.0,
                ee_offset_angle: 0.0,
                support_min: -0.10,
                support_max: 0.15,
                friction_coeff: 0.7,
            },
            sim: SimConfig {
                policy_dt: 0.02,
                pd_substeps: 10,
                horizon: 1000,
                reset_jitter: 0.05,
                pitch_limit: 1.2,
                zmp_grace_substeps: 3,
                // Pulling stance: legs and torso stacked vertically, elbows
                // drawn back so the arm mass moment cancels (whole-body CoM
                // directly above the ankle). The hand sits at polar radius
                // 1.0592 m / angle 0.335 rad from the ankle, which puts its
                // height at exactly 1.0 m both upright and at the lean
                // limit (the lumped model's end-effector lever).
                joints: vec![
                    joint("ankle_pitch", 0.32, 15.75, 0.0, (-0.9, 0.9), 120.0, 250.0, 38.0, 7.0, 0.8),
                    joint("knee_pitch", 0.32, 9.0, 0.0, (-0.9, 0.9), 150.0, 250.0, 32.0, 5.0, 0.8),
                    joint("hip_pitch", 0.14, 5.0, 0.0, (-1.0, 1.0), 150.0, 250.0, 27.0, 3.5, 0.8),
                    joint("waist_pitch", 0.40, 2.25, 0.0, (-0.8, 0.8), 90.0, 180.0, 13.0, 1.2, 0.6),
                    joint("shoulder_pitch", 0.257713, 1.5, -2.39945, (-1.5, 1.5), 45.0, 90.0, 5.0, 0.35, 0.8),
                    joint("elbow_pitch", 0.522443, 1.5, 1.551046, (-1.2, 1.2), 35.0, 60.0, 2.4, 0.12, 0.8),
                ],
                command: CommandConfig { v_lin_x: 0.0, mode: 0, root_height: 0.64 },
                stage1: ForceScheduleConfig {
                    base_magnitude: 12.0,
                    magnitude_std: 8.0,
                    magnitude_cap: Some(30.0),
                    angle_mean: 0.0,
                    angle_std: 0.15,
                    ramp_steps: 50,
                },
                stage2: ForceScheduleConfig {
                    base_magnitude: 80.0,
                    magnitude_std: 25.0,
                    magnitude_cap: Some(200.0),
                    angle_mean: 0.0,
                    angle_std: 0.15,
                    ramp_steps: 50,
                },
                upper_target_amplitude: 0.2,
            },
            reward: RewardConfig {
                beta_lim: 0.9,
                sigma_tilt: 0.05,
                w_velocity: 1.0,
                sigma_velocity: 0.25,
                w_fat2_lower: 2.0,
                w_fat2_waist: 2.0,
                w_height: 0.5,
                sigma_height: 0.02,
                w_survival: 0.5,
                w_waist_posture: 0.3,
                sigma_waist: 0.4,
                w_upper_tracking: 1.0,
                sigma_upper: 0.1,
                w_action_rate: 0.05,
                w_joint_limit: 1.0,
            },
            net: NetConfig { hidden: vec![128, 64, 32], init_log_std: -1.0, output_gain: 0.01 },
            trainer: TrainerConfig {
                iterations: 10_000,
                learning_rate: 5e-4,
                gamma: 0.98,
                clip_epsilon: 0.15,
                entropy_coef: 0.02,
                value_coef: 0.9,
                gae_lambda: 0.95,
                reg_weight: 1e-3,
                regularize_pd_torque: false,
                rollout_len: 64,
                minibatches: 4,
                epochs: 4,
                env_count: 64,
                curriculum_switch: 5000,
                grad_clip: 1.0,
                adv_norm_eps: 1e-8,
                checkpoint_interval: 100,
                monolithic: false,
            },
            eval: EvalConfig {
                hold_seconds: 2.0,
                ramp_rate: 40.0,
                seeds: 5,
                bisection_resolution: 1.0,
                sweep_forces: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0],
                sweep_episode_len: 150,
                upper_target_amplitude: 0.0,
            },
        }
    }
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form; stamped into every artifact.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invariant(m));
        self.geometry.validate().map_err(|e| ConfigError::Invariant(e.to_string()))?;

        let t = &self.trainer;
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return err(format!("trainer.gamma must lie in (0, 1], got {}", t.gamma));
        }
        if !(t.gae_lambda > 0.0 && t.gae_lambda <= 1.0) {
            return err(format!("trainer.gae_lambda must lie in (0, 1], got {}", t.gae_lambda));
        }
        if !(t.clip_epsilon > 0.0) {
            return err(format!("trainer.clip_epsilon must be > 0, got {}", t.clip_epsilon));
        }
        if !(t.reg_weight >= 0.0) {
            return err(format!("trainer.reg_weight must be >= 0, got {}", t.reg_weight));
        }
        if !(t.learning_rate > 0.0) {
            return err(format!("trainer.learning_rate must be > 0, got {}", t.learning_rate));
        }
        if t.rollout_len == 0 || t.env_count == 0 || t.epochs == 0 || t.minibatches == 0 {
            return err("trainer rollout/env/epoch/minibatch counts must be positive".into());
        }
        if t.minibatches as usize > (t.rollout_len as usize) * (t.env_count as usize) {
            return err("trainer.minibatches exceeds the number of rollout samples".into());
        }
        if !(t.grad_clip > 0.0) {
            return err(format!("trainer.grad_clip must be > 0, got {}", t.grad_clip));
        }

        let r = &self.reward;
        if !(r.beta_lim > 0.0 && r.beta_lim < FRAC_PI_2) {
            return err(format!("reward.beta_lim must lie in (0, pi/2), got {}", r.beta_lim));
        }
        if !(r.sigma_tilt > 0.0) {
            return err(format!("reward.sigma_tilt must be > 0, got {}", r.sigma_tilt));
        }
        for (name, s) in [
            ("sigma_velocity", r.sigma_velocity),
            ("sigma_height", r.sigma_height),
            ("sigma_waist", r.sigma_waist),
            ("sigma_upper", r.sigma_upper),
        ] {
            if !(s > 0.0) {
                return err(format!("reward.{name} must be > 0, got {s}"));
            }
        }

        let s = &self.sim;
        if s.joints.len() != NUM_JOINTS {
            return err(format!("sim.joints must list exactly {NUM_JOINTS} joints, got {}", s.joints.len()));
        }
        if !(s.policy_dt > 0.0) {
            return err(format!("sim.policy_dt must be > 0, got {}", s.policy_dt));
        }
        if s.pd_substeps == 0 {
            return err("sim.pd_substeps must be positive".into());
        }
        if s.horizon == 0 {
            return err("sim.horizon must be positive".into());
        }
        if !(s.pitch_limit > 0.0) {
            return err(format!("sim.pitch_limit must be > 0, got {}", s.pitch_limit));
        }
        for j in &s.joints {
            if !(j.link_length > 0.0 && j.link_mass >= 0.0) {
                return err(format!("joint {}: link length/mass invalid", j.name));
            }
            if !(j.angle_min < j.angle_max) {
                return err(format!("joint {}: angle_min must be < angle_max", j.name));
            }
            if !(j.kp > 0.0 && j.kd >= 0.0 && j.inertia > 0.0 && j.torque_limit > 0.0) {
                return err(format!("joint {}: servo parameters must be positive", j.name));
            }
            if !(j.action_scale > 0.0) {
                return err(format!("joint {}: action_scale must be > 0", j.name));
            }
        }
        if !(-0.6..=0.6).contains(&s.command.v_lin_x) {
            return err(format!("sim.command.v_lin_x must lie in [-0.6, 0.6], got {}", s.command.v_lin_x));
        }
        if s.command.mode > 1 {
            return err(format!("sim.command.mode must be 0 or 1, got {}", s.command.mode));
        }
        let leg_reach: f64 = s.joints[..3].iter().map(|j| j.link_length).sum();
        if !(s.command.root_height > 0.0 && s.command.root_height <= leg_reach + 1e-9) {
            return err(format!(
                "sim.command.root_height must lie in (0, {leg_reach}], got {}",
                s.command.root_height
            ));
        }
        for (label, f) in [("stage1", &s.stage1), ("stage2", &s.stage2)] {
            if !(f.magnitude_std >= 0.0 && f.base_magnitude >= 0.0) {
                return err(format!("sim.{label}: magnitudes must be >= 0"));
            }
            if let Some(cap) = f.magnitude_cap {
                if !(cap >= 0.0) {
                    return err(format!("sim.{label}: magnitude_cap must be >= 0"));
                }
            }
            if !(0.0..FRAC_PI_2).contains(&f.angle_mean) || !(f.angle_std >= 0.0) {
                return err(format!("sim.{label}: angle distribution out of range"));
            }
        }

        if self.net.hidden.is_empty() {
            return err("net.hidden must list at least one hidden width".into());
        }
        if self.net.hidden.iter().any(|w| *w == 0) {
            return err("net.hidden widths must be positive".into());
        }

        let e = &self.eval;
        if !(e.hold_seconds > 0.0 && e.ramp_rate > 0.0 && e.bisection_resolution > 0.0) {
            return err("eval hold/ramp/resolution must be positive".into());
        }
        if e.seeds == 0 {
            return err("eval.seeds must be positive".into());
        }
        if e.sweep_forces.windows(2).any(|w| w[0] > w[1]) {
            return err("eval.sweep_forces must be sorted ascending".into());
        }
        Ok(())
    }
}

/// Recursively overlay `patch` onto `base` (objects merge, everything else
/// replaces).
fn merge_value(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply one `key=value` override. Keys may be dotted paths
/// (`trainer.gamma`) or bare field names that occur in exactly one section
/// (`gamma`). Values are parsed as JSON when possible, else taken verbatim
/// as strings.
fn apply_override(doc: &mut serde_json::Value, key: &str, raw_value: &str) -> Result<(), ConfigError> {
    let value: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    let path: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else {
        resolve_bare_key(doc, key)?
    };
    let mut slot = doc;
    for (i, part) in path.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        if i + 1 == path.len() {
            if !obj.contains_key(*part) {
                return Err(ConfigError::UnknownKey(key.to_string()));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        slot = obj
            .get_mut(*part)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
    }
    unreachable!("override path is never empty")
}

fn resolve_bare_key<'a>(
    doc: &serde_json::Value,
    key: &'a str,
) -> Result<Vec<&'a str>, ConfigError> {
    let root = doc.as_object().expect("config root is an object");
    if root.contains_key(key) {
        return Ok(vec![key]);
    }
    let mut hits: Vec<String> = Vec::new();
    for (section, value) in root {
        if let Some(obj) = value.as_object() {
            if obj.contains_key(key) {
                hits.push(section.clone());
            }
        }
    }
    match hits.len() {
        1 => {
            let section = hits.pop().unwrap();
            let section_static = SECTION_NAMES
                .iter()
                .copied()
                .find(|s| *s == section)
                .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            Ok(vec![section_static, key])
        }
        0 => Err(ConfigError::UnknownKey(key.to_string())),
        _ => Err(ConfigError::UnknownKey(format!(
            "{key} (ambiguous: present in sections {})",
            hits.join(", ")
        ))),
    }
}

const SECTION_NAMES: &[&str] = &["geometry", "sim", "reward", "net", "trainer", "eval"];

/// Load and resolve a configuration: defaults <- file <- overrides, then
/// validate. `path = None` starts from pure defaults.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut doc = serde_json::to_value(RunConfig::default()).expect("defaults serialize");

    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|_| ConfigError::MissingFile(path.display().to_string()))?;
        if !text.trim().is_empty() {
            let file_value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            if !file_value.is_object() {
                return Err(ConfigError::Parse("config root must be a JSON object".into()));
            }
            merge_value(&mut doc, file_value);
        }
    }

    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("override `{item}` is not key=value")))?;
        apply_override(&mut doc, key.trim(), value.trim())?;
    }

    let config: RunConfig = serde_json::from_value(doc).map_err(|e| {
        let msg = e.to_string();
        if msg.contains("unknown field") {
            ConfigError::UnknownKey(msg)
        } else {
            ConfigError::Parse(msg)
        }
    })?;
    config.validate()?;
    Ok(config)
}
