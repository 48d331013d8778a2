//! Closed-form statics walkthrough: support reactions, ZMP location,
//! force-adaptive tilt targets, and the maximum-interactive-force
//! envelope, all on the default geometry.
//!
//! Run: cargo run --example statics_envelope

use thor_lab::config::RunConfig;
use thor_lab::quasistatics::{
    expected_tilt, fat2_reward, max_interactive_force, solve_support_reactions, zmp_location,
    HandForce, PullDirection,
};

fn main() {
    let cfg = RunConfig::default();
    let geom = &cfg.geometry;
    let beta_lim = cfg.reward.beta_lim;

    println!(
        "geometry: m = {} kg, |r_CoM| = {} m, |r_h| = {} m, support [{}, {}] m, mu = {}",
        geom.total_mass,
        geom.com_distance,
        geom.ee_distance,
        geom.support_min,
        geom.support_max,
        geom.friction_coeff
    );
    println!("weight m*g = {:.2} N, lean limit = {} rad\n", geom.weight(), beta_lim);

    println!("{:>8} {:>10} {:>10} {:>6} {:>10} {:>10} {:>8}", "F_h [N]", "F_s [N]", "F_f [N]", "slip", "zmp [m]", "beta [rad]", "kernel");
    for magnitude in [0.0, 20.0, 40.0, 60.0, 80.0, 96.0, 120.0] {
        let f = HandForce::new(magnitude, 0.0, PullDirection::TowardPosX);
        let reactions = solve_support_reactions(geom, &f);
        let zmp = zmp_location(geom, &f, 0.0, geom.ee_lever()).unwrap();
        let tilt = expected_tilt(geom, &f, beta_lim);
        // Tilt-tracking reward for a body holding 0.1 rad short of target.
        let kernel = fat2_reward(tilt.beta, tilt.beta + 0.1, cfg.reward.sigma_tilt);
        println!(
            "{magnitude:>8.1} {:>10.2} {:>10.2} {:>6} {:>10.4} {:>10.4} {:>8.4}",
            reactions.support_force, reactions.friction_force, reactions.slip, zmp, tilt.beta, kernel
        );
    }

    println!("\nforce envelope vs force-line angle (lean limit {beta_lim} rad):");
    for deg in [0.0_f64, 15.0, 30.0, 45.0, 60.0] {
        let alpha = deg.to_radians();
        let f_max = max_interactive_force(geom, alpha, beta_lim).unwrap();
        println!("  alpha = {deg:>4.0} deg -> F_max = {f_max:>8.2} N");
    }
}
