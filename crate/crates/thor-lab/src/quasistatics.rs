//! Closed-form quasi-statics of a planar biped interacting with the
//! environment through a hand force.
//!
//! Conventions used throughout the crate:
//!
//! * The sagittal plane is (x, z); x points forward, z points up.
//! * The foot support interval lies on the ground with the pivot (the
//!   reference point of all lever arms) at the origin; `support_min < 0 <
//!   support_max`.
//! * The torso tilt `beta` is measured from the ground plane, so an upright
//!   body has `beta = pi/2` and leaning lowers `beta` toward the lean limit
//!   `beta_lim`.
//! * A hand force has a magnitude, an angle `alpha` from the ground
//!   (0 = horizontal), and a horizontal direction sign. Its vertical
//!   component points downward (a pull on a grounded load) and is absorbed
//!   by the support reaction together with gravity; its horizontal
//!   component is balanced by foot friction.
//!
//! All operations are pure functions; none of them mutate shared state.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

/// Tilt of a body standing perfectly upright.
pub const UPRIGHT_TILT: f64 = FRAC_PI_2;

/// Below this value of `cos(phi) * cos(alpha)` the force line is treated as
/// vertical and the interactive-force bound is undefined.
pub const MIN_FORCE_LINE_COS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StaticsError {
    #[error("invalid body geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid hand force: {0}")]
    InvalidForce(String),
    #[error("total vertical load {0} N is not positive")]
    DegenerateLoad(f64),
    #[error("force line nearly vertical (cos(phi)*cos(alpha) = {0:e})")]
    VerticalForceLine(f64),
}

/// Horizontal direction of the hand force acting **on** the body.
///
/// `TowardPosX` is a load in front of the robot pulling it forward (the
/// robot leans back to resist); `TowardNegX` is the mirror case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PullDirection {
    TowardNegX,
    TowardPosX,
}

impl PullDirection {
    pub fn sign(self) -> f64 {
        match self {
            PullDirection::TowardNegX => -1.0,
            PullDirection::TowardPosX => 1.0,
        }
    }
}

/// Lumped-body geometry: everything the statics needs to know about the
/// robot. All values come from the shared config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyGeometry {
    /// Total mass in kg.
    pub total_mass: f64,
    /// Gravitational acceleration in m/s^2.
    pub gravity_accel: f64,
    /// Pivot-to-CoM distance |r_CoM| in m.
    pub com_distance: f64,
    /// Pivot-to-end-effector distance |r_h| in m.
    pub ee_distance: f64,
    /// Angle phi of the end-effector lever from the CoM line, in rad.
    pub ee_offset_angle: f64,
    /// Rear edge of the foot support interval (negative), in m.
    pub support_min: f64,
    /// Front edge of the foot support interval (positive), in m.
    pub support_max: f64,
    /// Coulomb friction coefficient between feet and ground.
    pub friction_coeff: f64,
}

impl BodyGeometry {
    /// Body weight m*g in N.
    pub fn weight(&self) -> f64 {
        self.total_mass * self.gravity_accel
    }

    /// Effective vertical lever arm of the end effector, |r_h|*cos(phi).
    pub fn ee_lever(&self) -> f64 {
        self.ee_distance * self.ee_offset_angle.cos()
    }

    pub fn validate(&self) -> Result<(), StaticsError> {
        let err = |m: String| Err(StaticsError::InvalidGeometry(m));
        if !(self.total_mass > 0.0) {
            return err(format!("total_mass must be > 0, got {}", self.total_mass));
        }
        if !(self.gravity_accel > 0.0) {
            return err(format!("gravity_accel must be > 0, got {}", self.gravity_accel));
        }
        if !(self.com_distance > 0.0) {
            return err(format!("com_distance must be > 0, got {}", self.com_distance));
        }
        if !(self.ee_distance > 0.0) {
            return err(format!("ee_distance must be > 0, got {}", self.ee_distance));
        }
        if !(self.support_min < 0.0 && self.support_max > 0.0) {
            return err(format!(
                "support interval must straddle the pivot, got [{}, {}]",
                self.support_min, self.support_max
            ));
        }
        if !(0.0..FRAC_PI_2).contains(&self.ee_offset_angle) {
            return err(format!(
                "ee_offset_angle must lie in [0, pi/2), got {}",
                self.ee_offset_angle
            ));
        }
        if !(self.friction_coeff > 0.0) {
            return err(format!("friction_coeff must be > 0, got {}", self.friction_coeff));
        }
        Ok(())
    }
}

/// External force applied at the hands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandForce {
    /// Magnitude |F_h| >= 0 in N.
    pub magnitude: f64,
    /// Angle alpha between the force line and the ground, in [0, pi/2).
    pub ground_angle: f64,
    /// Horizontal direction of the force on the body.
    pub direction: PullDirection,
}

impl HandForce {
    pub fn new(magnitude: f64, ground_angle: f64, direction: PullDirection) -> Self {
        Self { magnitude, ground_angle, direction }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, PullDirection::TowardPosX)
    }

    /// Horizontal component, signed along x.
    pub fn horizontal(&self) -> f64 {
        self.direction.sign() * self.magnitude * self.ground_angle.cos()
    }

    /// Downward vertical component (>= 0); a pull on a grounded load loads
    /// the support.
    pub fn vertical_load(&self) -> f64 {
        self.magnitude * self.ground_angle.sin()
    }

    pub fn validate(&self) -> Result<(), StaticsError> {
        if !(self.magnitude >= 0.0) || !self.magnitude.is_finite() {
            return Err(StaticsError::InvalidForce(format!(
                "magnitude must be finite and >= 0, got {}",
                self.magnitude
            )));
        }
        if !(0.0..FRAC_PI_2).contains(&self.ground_angle) {
            return Err(StaticsError::InvalidForce(format!(
                "ground_angle must lie in [0, pi/2), got {}",
                self.ground_angle
            )));
        }
        Ok(())
    }
}

/// Ground reactions balancing gravity plus the hand force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSolution {
    /// Vertical ground reaction |F_s| in N (>= 0).
    pub support_force: f64,
    /// Signed horizontal friction force at the feet in N.
    pub friction_force: f64,
    /// True when the required friction exceeds the Coulomb bound.
    pub slip: bool,
}

/// Torso tilt target produced by [`expected_tilt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltTarget {
    /// Tilt from the ground plane, in [beta_lim, pi/2].
    pub beta: f64,
    /// True when either the arccos argument or the lean limit clamp fired.
    pub clamped: bool,
}

/// Vertical and frictional ground reactions for a body holding a hand force.
///
/// The support carries the body weight plus the downward component of the
/// hand force; friction opposes the horizontal component. Total on valid
/// inputs.
pub fn solve_support_reactions(geom: &BodyGeometry, f: &HandForce) -> EquilibriumSolution {
    let support_force = geom.weight() + f.vertical_load();
    let friction_force = -f.horizontal();
    let slip = friction_force.abs() > geom.friction_coeff * support_force;
    EquilibriumSolution { support_force, friction_force, slip }
}

/// x-coordinate of the zero-moment point under quasi-statics.
///
/// The hand force tips the body through its horizontal component acting at
/// height `ee_height`; its vertical component only adds to the support load
/// (the horizontal offset of the hand is neglected, consistent with the
/// small-d3 simplification used by the tilt model). Balance holds iff the
/// result lies in `[support_min, support_max]`.
pub fn zmp_location(
    geom: &BodyGeometry,
    f: &HandForce,
    com_x: f64,
    ee_height: f64,
) -> Result<f64, StaticsError> {
    let weight = geom.weight();
    let total_vertical = weight + f.vertical_load();
    if !(total_vertical > 0.0) {
        return Err(StaticsError::DegenerateLoad(total_vertical));
    }
    Ok((weight * com_x + f.horizontal() * ee_height) / total_vertical)
}

/// Equilibrium torso tilt for the applied hand force.
///
/// The raw value is `arccos(|F_h|·|r_h|·cos(phi)·cos(alpha) / (m·g·|r_CoM|))`
/// with the arccos argument clamped into [0, 1] and the result clamped into
/// `[beta_lim, pi/2]`. Forces beyond the physical envelope therefore map to
/// the lean limit instead of a domain error.
pub fn expected_tilt(geom: &BodyGeometry, f: &HandForce, beta_lim: f64) -> TiltTarget {
    assert!(
        beta_lim > 0.0 && beta_lim < FRAC_PI_2,
        "beta_lim must lie in (0, pi/2), got {beta_lim}"
    );
    let raw_arg = f.magnitude * geom.ee_lever() * f.ground_angle.cos()
        / (geom.weight() * geom.com_distance);
    let arg = raw_arg.clamp(0.0, 1.0);
    let raw_beta = arg.acos();
    let beta = raw_beta.clamp(beta_lim, FRAC_PI_2);
    TiltTarget { beta, clamped: raw_arg > 1.0 || raw_beta < beta_lim }
}

/// Gaussian tilt-tracking kernel on the gap between the target tilt and the
/// realized tilt; always in (0, 1], symmetric in its two tilt arguments.
pub fn fat2_reward(beta_target: f64, beta_actual: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be > 0, got {sigma}");
    let d = beta_target - beta_actual;
    (-(d * d) / sigma).exp()
}

/// Largest hand force sustainable at the lean limit:
/// `m·g·|r_CoM|·cos(beta_lim) / (|r_h|·cos(phi)·cos(alpha))`.
///
/// Errors when the force line is nearly vertical (`cos(phi)·cos(alpha)`
/// below [`MIN_FORCE_LINE_COS`]), where the bound is undefined.
pub fn max_interactive_force(
    geom: &BodyGeometry,
    f_angle: f64,
    beta_lim: f64,
) -> Result<f64, StaticsError> {
    assert!(
        beta_lim > 0.0 && beta_lim < FRAC_PI_2,
        "beta_lim must lie in (0, pi/2), got {beta_lim}"
    );
    let line_cos = geom.ee_offset_angle.cos() * f_angle.cos();
    if line_cos <= MIN_FORCE_LINE_COS {
        return Err(StaticsError::VerticalForceLine(line_cos));
    }
    Ok(geom.weight() * geom.com_distance * beta_lim.cos() / (geom.ee_distance * line_cos))
}

/// Net torque residual of the full moment balance with explicit lever arms:
/// `|F_h|·d1·cos(alpha) + |F_h|·d3·sin(alpha) − m·g·|r_CoM|·cos(beta)`.
///
/// Zero at equilibrium. The simplified balance used by [`expected_tilt`] is
/// this residual with `d3 = 0` and `d1 = |r_h|·cos(phi)`.
pub fn torque_residual_full(
    geom: &BodyGeometry,
    f: &HandForce,
    beta: f64,
    ee_height: f64,
    ee_horizontal: f64,
) -> f64 {
    f.magnitude * ee_height * f.ground_angle.cos()
        + f.magnitude * ee_horizontal * f.ground_angle.sin()
        - geom.weight() * geom.com_distance * beta.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn default_geometry() -> BodyGeometry {
        BodyGeometry {
            total_mass: 35.0,
            gravity_accel: 9.81,
            com_distance: 0.45,
            ee_distance: 1.0,
            ee_offset_angle: 0.0,
            support_min: -0.10,
            support_max: 0.15,
            friction_coeff: 0.7,
        }
    }

    /// Independent oracle: solve the full moment balance for beta by
    /// bisection on [0, pi/2]. Returns None when no equilibrium exists.
    pub(crate) fn bisect_equilibrium_tilt(
        geom: &BodyGeometry,
        f: &HandForce,
        d1: f64,
        d3: f64,
    ) -> Option<f64> {
        let residual = |beta: f64| torque_residual_full(geom, f, beta, d1, d3);
        // residual is increasing in beta; a root needs residual(0) <= 0.
        let (mut lo, mut hi) = (0.0_f64, FRAC_PI_2);
        if residual(lo) > 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    #[test]
    fn support_reactions_zero_force() {
        let sol = solve_support_reactions(&default_geometry(), &HandForce::zero());
        assert_abs_diff_eq!(sol.support_force, 343.35, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.friction_force, 0.0);
        assert!(!sol.slip);
    }

    #[test]
    fn support_reactions_coulomb_bound() {
        let mut geom = default_geometry();
        geom.friction_coeff = 0.1;
        let f = HandForce::new(50.0, 0.0, PullDirection::TowardPosX);
        let sol = solve_support_reactions(&geom, &f);
        // 50 N required vs 0.1 * 343.35 = 34.335 N available.
        assert_abs_diff_eq!(sol.friction_force.abs(), 50.0, epsilon = 1e-12);
        assert!(sol.slip);

        geom.friction_coeff = 0.5;
        let sol = solve_support_reactions(&geom, &f);
        assert!(!sol.slip); // 50 <= 171.675
    }

    #[test]
    fn support_reactions_vertical_component_loads_support() {
        let geom = default_geometry();
        let f = HandForce::new(60.0, 0.5, PullDirection::TowardNegX);
        let sol = solve_support_reactions(&geom, &f);
        assert_abs_diff_eq!(sol.support_force, 343.35 + 60.0 * 0.5_f64.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(sol.friction_force, 60.0 * 0.5_f64.cos(), epsilon = 1e-12);
    }

    #[test]
    fn zmp_symmetric_case_is_zero() {
        let geom = default_geometry();
        let x = zmp_location(&geom, &HandForce::zero(), 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(x, 0.0);
    }

    #[test]
    fn zmp_backward_pull_hand_value() {
        let geom = default_geometry();
        let f = HandForce::new(50.0, 0.0, PullDirection::TowardNegX);
        let x = zmp_location(&geom, &f, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(x, -50.0 / 343.35, epsilon = 1e-12);

        // Choosing com_x to cancel the numerator recenters the ZMP.
        let x = zmp_location(&geom, &f, 50.0 / 343.35, 1.0).unwrap();
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zmp_degenerate_load_errors() {
        let mut geom = default_geometry();
        geom.total_mass = -1.0; // invalid on purpose; the guard must fire
        let err = zmp_location(&geom, &HandForce::zero(), 0.0, 1.0).unwrap_err();
        assert!(matches!(err, StaticsError::DegenerateLoad(_)));
    }

    #[test]
    fn expected_tilt_zero_force_is_upright() {
        let t = expected_tilt(&default_geometry(), &HandForce::zero(), 0.9);
        assert_abs_diff_eq!(t.beta, UPRIGHT_TILT);
        assert!(!t.clamped);
    }

    #[test]
    fn expected_tilt_half_argument_is_pi_over_three() {
        let geom = default_geometry();
        // Force putting the arccos argument at exactly 1/2.
        let f_exact = geom.weight() * geom.com_distance * 0.5 / geom.ee_lever();
        let t = expected_tilt(&geom, &HandForce::new(f_exact, 0.0, PullDirection::TowardPosX), 0.9);
        assert_abs_diff_eq!(t.beta, std::f64::consts::FRAC_PI_3, epsilon = 1e-9);
        assert!(!t.clamped);
        // The 5-digit rounding of that force still lands within 1e-5.
        let t = expected_tilt(&geom, &HandForce::new(77.254, 0.0, PullDirection::TowardPosX), 0.9);
        assert_abs_diff_eq!(t.beta, std::f64::consts::FRAC_PI_3, epsilon = 1e-5);
    }

    #[test]
    fn expected_tilt_clamps_beyond_envelope() {
        let geom = default_geometry();
        let t = expected_tilt(&geom, &HandForce::new(200.0, 0.0, PullDirection::TowardPosX), 0.9);
        // 200 N drives the raw argument to ~1.29, clamped to 1 -> arccos 0,
        // then clamped up to the lean limit.
        assert_abs_diff_eq!(t.beta, 0.9);
        assert!(t.clamped);
    }

    #[test]
    fn fat2_reward_values() {
        assert_abs_diff_eq!(fat2_reward(0.7, 0.7, 0.05), 1.0);
        assert_abs_diff_eq!(fat2_reward(0.8, 0.7, 0.05), (-0.2_f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(fat2_reward(0.8, 0.7, 0.05), 0.81873, epsilon = 1e-5);
        assert!(fat2_reward(0.9, 10.0, 0.05) < 1e-30);
    }

    #[test]
    fn max_force_default_geometry() {
        let geom = default_geometry();
        let f_max = max_interactive_force(&geom, 0.0, 0.9).unwrap();
        assert_abs_diff_eq!(f_max, 154.5075 * 0.9_f64.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(f_max, 96.05, epsilon = 0.01);
        // Tilting the force line scales the bound by 1/cos(alpha).
        let doubled = max_interactive_force(&geom, std::f64::consts::FRAC_PI_3, 0.9).unwrap();
        assert_abs_diff_eq!(doubled, 2.0 * f_max, epsilon = 1e-9);
    }

    #[test]
    fn max_force_vertical_line_errors() {
        let geom = default_geometry();
        let err = max_interactive_force(&geom, FRAC_PI_2 - 1e-10, 0.9).unwrap_err();
        assert!(matches!(err, StaticsError::VerticalForceLine(_)));
    }

    #[test]
    fn tilt_roundtrip_at_envelope() {
        let geom = default_geometry();
        let f_max = max_interactive_force(&geom, 0.0, 0.9).unwrap();
        let t = expected_tilt(&geom, &HandForce::new(f_max, 0.0, PullDirection::TowardPosX), 0.9);
        assert_abs_diff_eq!(t.beta, 0.9, epsilon = 1e-9);
    }

    #[test]
    fn residual_vanishes_at_equilibrium() {
        let geom = default_geometry();
        // Upright with no force.
        assert_abs_diff_eq!(
            torque_residual_full(&geom, &HandForce::zero(), UPRIGHT_TILT, 1.0, 0.0),
            0.0,
            epsilon = 1e-12
        );
        // The pi/3 worked case with d3 = 0.
        let f_exact = geom.weight() * geom.com_distance * 0.5 / geom.ee_lever();
        let f = HandForce::new(f_exact, 0.0, PullDirection::TowardPosX);
        let beta = expected_tilt(&geom, &f, 0.9).beta;
        let r = torque_residual_full(&geom, &f, beta, geom.ee_lever(), 0.0);
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-9);
        // At alpha = 0 the d3 term is annihilated.
        let r3 = torque_residual_full(&geom, &f, beta, geom.ee_lever(), 0.05 * geom.ee_distance);
        assert_abs_diff_eq!(r3, r, epsilon = 1e-15);
    }

    #[test]
    fn validate_rejects_bad_geometry() {
        let mut geom = default_geometry();
        geom.support_min = 0.01;
        assert!(geom.validate().is_err());
        let mut geom = default_geometry();
        geom.total_mass = 0.0;
        assert!(geom.validate().is_err());
        assert!(default_geometry().validate().is_ok());
    }

    #[test]
    fn full_balance_bisection_close_to_simplified_tilt() {
        // Force grid up to just below the envelope, alpha up to pi/4,
        // |d3| up to 5% of |r_h|: the simplified tilt stays within 0.05 rad
        // of the full-balance root.
        let geom = default_geometry();
        let beta_lim = 0.9;
        let mut max_gap = 0.0_f64;
        for ai in 0..5 {
            let alpha = std::f64::consts::FRAC_PI_4 * ai as f64 / 4.0;
            let f_env = max_interactive_force(&geom, alpha, beta_lim).unwrap();
            for fi in 0..=20 {
                let mag = f_env * 0.999 * fi as f64 / 20.0;
                let f = HandForce::new(mag, alpha, PullDirection::TowardPosX);
                let simplified = expected_tilt(&geom, &f, beta_lim).beta;
                for d3 in [-0.05, 0.0, 0.05] {
                    let root =
                        bisect_equilibrium_tilt(&geom, &f, geom.ee_lever(), d3 * geom.ee_distance)
                            .expect("equilibrium exists below the envelope");
                    max_gap = max_gap.max((root - simplified).abs());
                }
            }
        }
        assert!(max_gap <= 0.05, "max gap {max_gap} exceeds 0.05 rad");
    }

    proptest! {
        #[test]
        fn tilt_is_non_increasing_in_force(
            mag in 0.0..300.0f64,
            delta in 0.0..50.0f64,
            alpha in 0.0..1.0f64,
        ) {
            let geom = default_geometry();
            let lo = expected_tilt(&geom, &HandForce::new(mag, alpha, PullDirection::TowardPosX), 0.9);
            let hi = expected_tilt(&geom, &HandForce::new(mag + delta, alpha, PullDirection::TowardPosX), 0.9);
            prop_assert!(hi.beta <= lo.beta + 1e-12);
        }

        #[test]
        fn tilt_roundtrip_property(
            mass in 5.0..200.0f64,
            com in 0.1..1.0f64,
            ee in 0.3..2.0f64,
            phi in 0.0..1.2f64,
            alpha in 0.0..1.2f64,
            beta_lim in 0.05..1.5f64,
        ) {
            prop_assume!(phi.cos() * alpha.cos() >= 0.1);
            prop_assume!(beta_lim < FRAC_PI_2 - 1e-3);
            let geom = BodyGeometry {
                total_mass: mass,
                gravity_accel: 9.81,
                com_distance: com,
                ee_distance: ee,
                ee_offset_angle: phi,
                support_min: -0.1,
                support_max: 0.1,
                friction_coeff: 0.7,
            };
            let f_max = max_interactive_force(&geom, alpha, beta_lim).unwrap();
            let t = expected_tilt(&geom, &HandForce::new(f_max, alpha, PullDirection::TowardPosX), beta_lim);
            prop_assert!((t.beta - beta_lim).abs() < 1e-9);
        }

        #[test]
        fn residual_consistent_with_tilt(
            mag_frac in 0.0..1.0f64,
            alpha in 0.0..1.0f64,
        ) {
            let geom = default_geometry();
            let beta_lim = 0.9;
            let f_env = max_interactive_force(&geom, alpha, beta_lim).unwrap();
            // Keep the Eq-17 argument within [cos(beta_lim)*0.999, 1].
            let mag = f_env * (0.001 + 0.999 * mag_frac).min(1.0) * 0.999;
            let f = HandForce::new(mag, alpha, PullDirection::TowardPosX);
            let t = expected_tilt(&geom, &f, beta_lim);
            if !t.clamped {
                let r = torque_residual_full(&geom, &f, t.beta, geom.ee_lever(), 0.0);
                prop_assert!(r.abs() < 1e-9, "residual {r}");
            }
        }

        #[test]
        fn zmp_affine_in_com(
            com_a in -0.5..0.5f64,
            com_b in -0.5..0.5f64,
            mag in 0.0..200.0f64,
            alpha in 0.0..1.2f64,
            h in 0.2..1.5f64,
        ) {
            let geom = default_geometry();
            let f = HandForce::new(mag, alpha, PullDirection::TowardNegX);
            let za = zmp_location(&geom, &f, com_a, h).unwrap();
            let zb = zmp_location(&geom, &f, com_b, h).unwrap();
            let slope = geom.weight() / (geom.weight() + f.vertical_load());
            prop_assert!((zb - za - slope * (com_b - com_a)).abs() < 1e-9);
        }

        #[test]
        fn fat2_bounded_and_symmetric(
            a in -2.0..2.0f64,
            b in -2.0..2.0f64,
            sigma in 0.001..1.0f64,
        ) {
            let r = fat2_reward(a, b, sigma);
            prop_assert!(r >= 0.0 && r <= 1.0);
            // exp underflows to +0 once the exponent passes ~-745; strict
            // positivity holds everywhere above that.
            if (a - b).powi(2) / sigma < 700.0 {
                prop_assert!(r > 0.0);
            }
            prop_assert!((r - fat2_reward(b, a, sigma)).abs() < 1e-15);
        }
    }
}
