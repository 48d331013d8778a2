//! Per-episode external-force schedules and procedural upper-body targets.

use crate::config::{ForceScheduleConfig, JointConfig, UPPER_RANGE};
use crate::quasistatics::{HandForce, PullDirection};
use crate::rng::normal;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The force drawn for one episode: a fixed magnitude/line reached through
/// a linear ramp over the first `ramp_steps` policy steps, then held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeForce {
    pub magnitude: f64,
    pub angle: f64,
    pub direction: PullDirection,
    pub ramp_steps: u32,
}

impl EpisodeForce {
    pub fn zero() -> Self {
        Self { magnitude: 0.0, angle: 0.0, direction: PullDirection::TowardPosX, ramp_steps: 0 }
    }

    /// Force applied at policy step `step` of the episode.
    pub fn at_step(&self, step: u32) -> HandForce {
        let frac = if self.ramp_steps == 0 {
            1.0
        } else {
            ((step as f64) / (self.ramp_steps as f64)).min(1.0)
        };
        HandForce::new(self.magnitude * frac, self.angle, self.direction)
    }

    /// Sample an episode force from a stage's Gaussian distribution.
    /// Magnitudes are clamped into [0, cap]; the force-line angle is
    /// clamped into [0, pi/2); the horizontal direction is a fair coin.
    pub fn sample(cfg: &ForceScheduleConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut magnitude = normal(rng, cfg.base_magnitude, cfg.magnitude_std).max(0.0);
        if let Some(cap) = cfg.magnitude_cap {
            magnitude = magnitude.min(cap);
        }
        let angle = normal(rng, cfg.angle_mean, cfg.angle_std)
            .clamp(0.0, std::f64::consts::FRAC_PI_2 - 1e-6);
        let direction =
            if rng.gen::<bool>() { PullDirection::TowardPosX } else { PullDirection::TowardNegX };
        Self { magnitude, angle, direction, ramp_steps: cfg.ramp_steps }
    }
}

/// Smooth bounded reference trajectories for the two upper-body joints:
/// a sum of three random-phase sinusoids per joint, scaled so the target
/// never leaves the joint limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperTargets {
    amps: [f64; 2],
    weights: [[f64; 3]; 2],
    /// Angular frequency per policy step.
    freqs: [[f64; 3]; 2],
    phases: [[f64; 3]; 2],
    limits: [(f64, f64); 2],
}

impl UpperTargets {
    pub fn sample(joints: &[JointConfig], amplitude_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut amps = [0.0; 2];
        let mut weights = [[0.0; 3]; 2];
        let mut freqs = [[0.0; 3]; 2];
        let mut phases = [[0.0; 3]; 2];
        let mut limits = [(0.0, 0.0); 2];
        for (k, ji) in UPPER_RANGE.enumerate() {
            let j = &joints[ji];
            limits[k] = (j.angle_min, j.angle_max);
            // Largest symmetric excursion around the nominal (zero) pose.
            let head_room = j.angle_max.min(-j.angle_min).max(0.0);
            amps[k] = amplitude_scale.min(head_room);
            let mut raw = [0.0; 3];
            let mut total = 0.0;
            for c in &mut raw {
                *c = rng.gen_range(0.1..1.0);
                total += *c;
            }
            for (w, r) in weights[k].iter_mut().zip(raw) {
                *w = r / total;
            }
            for f in &mut freqs[k] {
                // Periods between one and four seconds at 50 Hz.
                *f = rng.gen_range(std::f64::consts::TAU / 200.0..std::f64::consts::TAU / 50.0);
            }
            for p in &mut phases[k] {
                *p = rng.gen_range(0.0..std::f64::consts::TAU);
            }
        }
        Self { amps, weights, freqs, phases, limits }
    }

    /// Target joint angles for the two upper joints at policy step `t`.
    pub fn at_step(&self, t: u32) -> [f64; 2] {
        let mut out = [0.0; 2];
        for k in 0..2 {
            let mut s = 0.0;
            for i in 0..3 {
                s += self.weights[k][i] * (self.freqs[k][i] * t as f64 + self.phases[k][i]).sin();
            }
            out[k] = (self.amps[k] * s).clamp(self.limits[k].0, self.limits[k].1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use rand::SeedableRng;

    #[test]
    fn ramp_profile_reaches_and_holds_magnitude() {
        let f = EpisodeForce {
            magnitude: 60.0,
            angle: 0.1,
            direction: PullDirection::TowardNegX,
            ramp_steps: 50,
        };
        assert_eq!(f.at_step(0).magnitude, 0.0);
        assert!((f.at_step(25).magnitude - 30.0).abs() < 1e-12);
        assert_eq!(f.at_step(50).magnitude, 60.0);
        assert_eq!(f.at_step(500).magnitude, 60.0);
    }

    #[test]
    fn stage1_samples_respect_cap_and_stage2_is_stronger() {
        let cfg = RunConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mean1 = 0.0;
        let mut mean2 = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let f1 = EpisodeForce::sample(&cfg.sim.stage1, &mut rng);
            assert!(f1.magnitude >= 0.0 && f1.magnitude <= 30.0);
            assert!((0.0..std::f64::consts::FRAC_PI_2).contains(&f1.angle));
            mean1 += f1.magnitude;
            let f2 = EpisodeForce::sample(&cfg.sim.stage2, &mut rng);
            assert!(f2.magnitude >= 0.0);
            mean2 += f2.magnitude;
        }
        assert!(mean2 / n as f64 > mean1 / n as f64, "stage 2 must be stronger on average");
    }

    #[test]
    fn upper_targets_deterministic_and_bounded() {
        let cfg = RunConfig::default();
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            UpperTargets::sample(&cfg.sim.joints, 0.2, &mut rng)
        };
        let a = gen(3);
        let b = gen(3);
        for t in 0..100_000 {
            let ta = a.at_step(t);
            assert_eq!(ta, b.at_step(t));
            for (k, ji) in UPPER_RANGE.enumerate() {
                let j = &cfg.sim.joints[ji];
                assert!(ta[k] >= j.angle_min && ta[k] <= j.angle_max);
            }
        }
    }

    #[test]
    fn zero_amplitude_is_constant_nominal() {
        let cfg = RunConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gen = UpperTargets::sample(&cfg.sim.joints, 0.0, &mut rng);
        for t in [0, 17, 400, 9999] {
            assert_eq!(gen.at_step(t), [0.0, 0.0]);
        }
    }
}
