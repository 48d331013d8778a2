//! Measurement protocols for force-interaction capability.
//!
//! * [`measure_peak_force`] ramps the external force until the first
//!   fall/slip, then bisects between the last sustained and first failed
//!   magnitudes down to the configured resolution; a magnitude counts only
//!   if it is held for the full hold duration. Repeated over seeds the
//!   results aggregate to mean +- standard error.
//! * [`tilt_force_sweep`] runs fixed-length constant-force episodes over
//!   an ascending force grid, recording realized versus predicted tilt.
//! * [`ablation_run`] trains a configuration variant (full, tilt-reward
//!   only, decoupling only, neither) and measures its peak force.
//!
//! The planar model collapses the dual-hand/single-hand and five-direction
//! measurement matrix into four conditions: pull direction (forward /
//! backward along x) times force-line angle (level / angled 0.3 rad below
//! horizontal). Trials are independent and could run in parallel;
//! aggregation is a single reduce.

use crate::config::RunConfig;
use crate::quasistatics::{expected_tilt, BodyGeometry, HandForce, PullDirection};
use crate::sim::{
    tilt_from_pitch, CurriculumStage, Env, EpisodeForce, Observation, PrivilegedObs,
    TerminationReason,
};
use crate::trainer::{PolicyBundle, Trainer};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Anything that can drive the body given the policy observation. The
/// privileged block is available to scripted measurement devices; learned
/// policies ignore it.
pub trait Controller {
    fn begin_episode(&mut self) {}
    fn act(&mut self, obs: &Observation, privileged: &PrivilegedObs) -> [f64; 6];
}

impl Controller for PolicyBundle {
    fn act(&mut self, obs: &Observation, _privileged: &PrivilegedObs) -> [f64; 6] {
        self.act_mean(obs)
    }
}

/// Holds the nominal pose regardless of input.
pub struct ZeroController;

impl Controller for ZeroController {
    fn act(&mut self, _obs: &Observation, _privileged: &PrivilegedObs) -> [f64; 6] {
        [0.0; 6]
    }
}

/// Degenerate policy that throws itself over immediately.
pub struct InstantFallController;

impl Controller for InstantFallController {
    fn act(&mut self, _obs: &Observation, _privileged: &PrivilegedObs) -> [f64; 6] {
        [1.0, 1.0, 1.0, 1.0, 0.0, 0.0]
    }
}

/// Scripted reference device: reads the applied force from the privileged
/// block and commands the whole-body lean that the equilibrium tilt model
/// prescribes, using the ankle.
pub struct TiltOracleController {
    geom: BodyGeometry,
    beta_lim: f64,
    ankle_scale: f64,
}

impl TiltOracleController {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            geom: cfg.geometry.clone(),
            beta_lim: cfg.reward.beta_lim,
            ankle_scale: cfg.sim.joints[0].action_scale,
        }
    }
}

impl Controller for TiltOracleController {
    fn act(&mut self, _obs: &Observation, privileged: &PrivilegedObs) -> [f64; 6] {
        let fx = privileged.hand_force[0];
        let fz = privileged.hand_force[1];
        let magnitude = (fx * fx + fz * fz).sqrt();
        let direction =
            if fx >= 0.0 { PullDirection::TowardPosX } else { PullDirection::TowardNegX };
        let angle = if magnitude > 0.0 {
            (-fz).atan2(fx.abs()).clamp(0.0, std::f64::consts::FRAC_PI_2 - 1e-6)
        } else {
            0.0
        };
        let f = HandForce::new(magnitude, angle, direction);
        let beta = expected_tilt(&self.geom, &f, self.beta_lim).beta;
        let lean = std::f64::consts::FRAC_PI_2 - beta;
        let ankle = -direction.sign() * lean / self.ankle_scale;
        [ankle.clamp(-1.0, 1.0), 0.0, 0.0, 0.0, 0.0, 0.0]
    }
}

/// One of the planar measurement conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementCondition {
    pub label: String,
    pub direction: PullDirection,
    /// Force-line angle below horizontal, rad.
    pub force_angle: f64,
}

/// The planar collapse of the measurement matrix: two pull directions
/// times two force-line angles.
pub fn measurement_conditions() -> Vec<MeasurementCondition> {
    vec![
        MeasurementCondition {
            label: "forward_level".into(),
            direction: PullDirection::TowardPosX,
            force_angle: 0.0,
        },
        MeasurementCondition {
            label: "backward_level".into(),
            direction: PullDirection::TowardNegX,
            force_angle: 0.0,
        },
        MeasurementCondition {
            label: "forward_angled".into(),
            direction: PullDirection::TowardPosX,
            force_angle: 0.3,
        },
        MeasurementCondition {
            label: "backward_angled".into(),
            direction: PullDirection::TowardNegX,
            force_angle: 0.3,
        },
    ]
}

/// Outcome of one seeded peak-force trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceTrial {
    pub direction: String,
    pub ramp_rate: f64,
    pub hold_seconds: f64,
    pub seed: u64,
    /// Largest magnitude sustained for the full hold, N.
    pub peak: f64,
    /// Termination reason observed at the first failed magnitude.
    pub failure: TerminationReason,
}

/// Mean +- standard error across seeds for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakForceSummary {
    pub condition: MeasurementCondition,
    pub trials: Vec<ForceTrial>,
    pub mean: f64,
    pub std_error: f64,
}

fn eval_run_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.sim.upper_target_amplitude = cfg.eval.upper_target_amplitude;
    c
}

/// Run one constant-force episode: ramp to `magnitude` at the configured
/// ramp rate, then hold. Returns (survived_full_hold, termination_reason,
/// mean tilt over the held portion).
fn run_hold_episode(
    ctrl: &mut dyn Controller,
    cfg: &RunConfig,
    condition: &MeasurementCondition,
    magnitude: f64,
    hold_steps: u32,
    seed: u64,
) -> (bool, TerminationReason, f64) {
    let run_cfg = eval_run_config(cfg);
    let mut env = Env::new(&run_cfg);
    let ramp_steps = if magnitude > 0.0 {
        (magnitude / (cfg.eval.ramp_rate * cfg.sim.policy_dt)).ceil() as u32
    } else {
        0
    };
    env.set_force_override(Some(EpisodeForce {
        magnitude,
        angle: condition.force_angle,
        direction: condition.direction,
        ramp_steps,
    }));
    ctrl.begin_episode();
    let mut step = env.reset(seed, CurriculumStage::Stage2);
    let total = ramp_steps + hold_steps;
    let mut tilt_sum = 0.0;
    let mut tilt_count = 0u32;
    for t in 0..total {
        let action = ctrl.act(&step.observation, &step.privileged);
        match env.step(&action) {
            Ok(r) => {
                if t >= ramp_steps {
                    let f = env.applied_force();
                    tilt_sum += tilt_from_pitch(r.privileged.torso_pitch, &f);
                    tilt_count += 1;
                }
                if r.done {
                    return (
                        false,
                        r.termination_reason,
                        if tilt_count > 0 { tilt_sum / tilt_count as f64 } else { f64::NAN },
                    );
                }
                step = r;
            }
            Err(_) => return (false, env.termination(), f64::NAN),
        }
    }
    let mean_tilt = if tilt_count > 0 { tilt_sum / tilt_count as f64 } else { f64::NAN };
    (true, TerminationReason::None, mean_tilt)
}

/// Safety ceiling for the coarse ramp scan, N.
const PEAK_SCAN_CEILING: f64 = 400.0;
/// Coarse scan increment, N.
const PEAK_SCAN_STEP: f64 = 8.0;

/// Peak sustainable force for one condition and seed: coarse ascent to the
/// first failure, then bisection to the configured resolution.
pub fn measure_peak_force(
    ctrl: &mut dyn Controller,
    cfg: &RunConfig,
    condition: &MeasurementCondition,
    seed: u64,
) -> ForceTrial {
    let hold_steps = (cfg.eval.hold_seconds / cfg.sim.policy_dt).ceil() as u32;
    let mut trial = ForceTrial {
        direction: condition.label.clone(),
        ramp_rate: cfg.eval.ramp_rate,
        hold_seconds: cfg.eval.hold_seconds,
        seed,
        peak: 0.0,
        failure: TerminationReason::None,
    };

    let (ok, reason, _) = run_hold_episode(ctrl, cfg, condition, 0.0, hold_steps, seed);
    if !ok {
        trial.failure = reason;
        return trial;
    }

    let mut lo = 0.0;
    let mut hi = None;
    let mut magnitude = PEAK_SCAN_STEP;
    while magnitude <= PEAK_SCAN_CEILING {
        let (ok, reason, _) = run_hold_episode(ctrl, cfg, condition, magnitude, hold_steps, seed);
        if ok {
            lo = magnitude;
            magnitude += PEAK_SCAN_STEP;
        } else {
            hi = Some(magnitude);
            trial.failure = reason;
            break;
        }
    }
    let Some(mut hi) = hi else {
        // Nothing failed below the scan ceiling; report the last sustained
        // magnitude.
        trial.peak = lo;
        return trial;
    };

    while hi - lo > cfg.eval.bisection_resolution {
        let mid = 0.5 * (lo + hi);
        let (ok, reason, _) = run_hold_episode(ctrl, cfg, condition, mid, hold_steps, seed);
        if ok {
            lo = mid;
        } else {
            hi = mid;
            trial.failure = reason;
        }
    }
    trial.peak = lo;
    trial
}

/// Peak force over `seeds` consecutive seeds, reported mean +- SE.
pub fn measure_peak_force_multi(
    ctrl: &mut dyn Controller,
    cfg: &RunConfig,
    condition: &MeasurementCondition,
    base_seed: u64,
    seeds: u32,
) -> PeakForceSummary {
    let trials: Vec<ForceTrial> = (0..seeds as u64)
        .map(|s| measure_peak_force(ctrl, cfg, condition, base_seed + s))
        .collect();
    let n = trials.len() as f64;
    let mean = trials.iter().map(|t| t.peak).sum::<f64>() / n;
    let var = trials.iter().map(|t| (t.peak - mean).powi(2)).sum::<f64>() / n;
    let std_error = if trials.len() > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    PeakForceSummary { condition: condition.clone(), trials, mean, std_error }
}

/// One sweep point: applied force, realized mean tilt over the held
/// portion, the model's predicted tilt, and whether the episode survived.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub force: f64,
    pub mean_tilt: f64,
    pub predicted_tilt: f64,
    pub survived: bool,
}

/// Constant-force episodes over an ascending force grid.
pub fn tilt_force_sweep(
    ctrl: &mut dyn Controller,
    cfg: &RunConfig,
    condition: &MeasurementCondition,
    forces: &[f64],
    seed: u64,
) -> Vec<SweepRecord> {
    assert!(forces.windows(2).all(|w| w[0] <= w[1]), "sweep forces must be sorted ascending");
    let hold_steps = cfg.eval.sweep_episode_len;
    forces
        .iter()
        .map(|&force| {
            let (survived, _, mean_tilt) =
                run_hold_episode(ctrl, cfg, condition, force, hold_steps, seed);
            let f = HandForce::new(force, condition.force_angle, condition.direction);
            let predicted_tilt = expected_tilt(&cfg.geometry, &f, cfg.reward.beta_lim).beta;
            SweepRecord { force, mean_tilt, predicted_tilt, survived }
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vals[idx[j + 1]] == vals[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                ranks[idx[k]] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx).powi(2);
        vy += (ry[i] - my).powi(2);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Ablation variants: the full system, tilt reward without decoupling,
/// decoupling without tilt reward, and neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    Full,
    Fat2Only,
    DecoupledOnly,
    Neither,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Full,
        AblationVariant::Fat2Only,
        AblationVariant::DecoupledOnly,
        AblationVariant::Neither,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::Fat2Only => "fat2_only",
            AblationVariant::DecoupledOnly => "decoupled_only",
            AblationVariant::Neither => "neither",
        }
    }

    /// Map the variant onto config switches. `Full` is the identity.
    pub fn apply(self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            AblationVariant::Full => {}
            AblationVariant::Fat2Only => {
                c.trainer.monolithic = true;
            }
            AblationVariant::DecoupledOnly => {
                c.reward.w_fat2_lower = 0.0;
                c.reward.w_fat2_waist = 0.0;
            }
            AblationVariant::Neither => {
                c.trainer.monolithic = true;
                c.reward.w_fat2_lower = 0.0;
                c.reward.w_fat2_waist = 0.0;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationMetrics {
    pub variant: AblationVariant,
    pub summary: PeakForceSummary,
}

/// Train one ablation variant with the shared seed/budget, then measure
/// its peak force on the forward-level condition.
pub fn ablation_run(
    cfg: &RunConfig,
    variant: AblationVariant,
) -> Result<AblationMetrics, crate::trainer::TrainError> {
    let var_cfg = variant.apply(cfg);
    let mut trainer = Trainer::new(&var_cfg);
    for _ in 0..var_cfg.trainer.iterations {
        trainer.run_iteration()?;
    }
    let mut bundle = trainer.bundle().clone();
    let condition = measurement_conditions().into_iter().next().expect("conditions exist");
    let summary = measure_peak_force_multi(
        &mut bundle,
        &var_cfg,
        &condition,
        var_cfg.seed.wrapping_add(7_000),
        var_cfg.eval.seeds,
    );
    Ok(AblationMetrics { variant, summary })
}

/// `# config_hash=... tool_version=...` stamp line for output artifacts.
pub fn artifact_stamp(cfg: &RunConfig) -> String {
    format!("# config_hash={} tool_version={}", cfg.content_hash(), crate::TOOL_VERSION)
}

pub fn write_peak_force_csv<W: Write>(
    mut w: W,
    cfg: &RunConfig,
    rows: &[(String, ForceTrial)],
) -> std::io::Result<()> {
    writeln!(w, "{}", artifact_stamp(cfg))?;
    writeln!(w, "variant,direction,seed,peak_N,reason")?;
    for (variant, t) in rows {
        writeln!(w, "{},{},{},{},{}", variant, t.direction, t.seed, t.peak, t.failure.label())?;
    }
    Ok(())
}

pub fn write_tilt_sweep_csv<W: Write>(
    mut w: W,
    cfg: &RunConfig,
    records: &[SweepRecord],
) -> std::io::Result<()> {
    writeln!(w, "{}", artifact_stamp(cfg))?;
    writeln!(w, "force_N,tilt_rad,predicted_tilt_rad,survived")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.force, r.mean_tilt, r.predicted_tilt, r.survived as u8)?;
    }
    Ok(())
}
