//! Peak-force measurement with scripted controllers.
//!
//! Measures the peak sustainable pull for (a) a controller that holds the
//! nominal pose and (b) a scripted device that leans per the equilibrium
//! tilt model, on the default support interval and on a near-point support
//! (the idealization under which the analytic envelope is exact).
//!
//! Run: cargo run --release --example peak_force_probe

use thor_lab::config::RunConfig;
use thor_lab::eval::{
    measure_peak_force, measurement_conditions, TiltOracleController, ZeroController,
};
use thor_lab::quasistatics::max_interactive_force;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.eval.hold_seconds = 2.0;
    let condition = &measurement_conditions()[0]; // forward, level pull
    let envelope = max_interactive_force(&cfg.geometry, 0.0, cfg.reward.beta_lim).unwrap();
    println!("analytic envelope at the lean limit: {envelope:.2} N\n");

    println!("default support interval [{} , {}] m:", cfg.geometry.support_min, cfg.geometry.support_max);
    let trial = measure_peak_force(&mut ZeroController, &cfg, condition, 1);
    println!("  hold-nominal-pose peak: {:>7.2} N ({})", trial.peak, trial.failure.label());
    let mut oracle = TiltOracleController::new(&cfg);
    let trial = measure_peak_force(&mut oracle, &cfg, condition, 1);
    println!("  tilt-oracle peak:       {:>7.2} N ({})", trial.peak, trial.failure.label());

    // Near-point support: the ground reaction acts essentially at the
    // pivot, which is the assumption behind the analytic envelope. A
    // centimeter of support leaves no room for reset jitter.
    cfg.geometry.support_min = -0.01;
    cfg.geometry.support_max = 0.01;
    cfg.sim.reset_jitter = 0.0;
    println!("\nnear-point support [-0.01, 0.01] m:");
    let trial = measure_peak_force(&mut ZeroController, &cfg, condition, 1);
    println!("  hold-nominal-pose peak: {:>7.2} N ({})", trial.peak, trial.failure.label());
    let mut oracle = TiltOracleController::new(&cfg);
    let trial = measure_peak_force(&mut oracle, &cfg, condition, 1);
    println!(
        "  tilt-oracle peak:       {:>7.2} N ({})  [{:.1}% of the envelope]",
        trial.peak,
        trial.failure.label(),
        100.0 * trial.peak / envelope
    );
}
