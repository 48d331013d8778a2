//! thor-lab: a desk-scale laboratory for force-interactive humanoid
//! control.
//!
//! The crate couples a planar quasi-static humanoid simulator with a
//! decoupled three-agent PPO trainer and a set of measurement protocols for
//! force-interaction capability:
//!
//! * [`quasistatics`] — closed-form statics: support reactions, the
//!   zero-moment point, force-adaptive tilt targets, the tilt-tracking
//!   reward kernel, and the maximum-interactive-force envelope.
//! * [`sim`] — a six-joint sagittal MDP with a 500 Hz PD inner loop,
//!   Gaussian force disturbances, a two-stage curriculum, and
//!   balance-based termination.
//! * [`nn`] — a minimal dense network stack (MLP, diagonal-Gaussian policy
//!   head, Adam) with finite-difference gradient verification.
//! * [`trainer`] — shared-environment rollouts, per-agent GAE and clipped
//!   policy losses, a summed total objective with action regularization,
//!   and bit-exact checkpointing.
//! * [`eval`] — peak-force measurement with bisection refinement,
//!   force-vs-tilt sweeps, and an ablation harness.
//! * [`cli`] — the `train` / `eval` / `sweep` / `ablate` / `check`
//!   operator surface behind the thin `thor-lab` binary.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --example statics_envelope      # tilt targets and force bounds
//! cargo run --example simulate_standing     # a traced zero-policy episode
//! cargo run --example gradient_check        # backprop vs finite differences
//! cargo run --example train_stand           # a short standing-task run
//! cargo run --example peak_force_probe      # scripted-policy peak force
//! cargo run --example tilt_sweep            # force-vs-tilt curve to CSV
//! cargo run --example checkpoint_roundtrip  # save/resume bit-exactness
//! ```

pub mod cli;
pub mod config;
pub mod eval;
pub mod nn;
pub mod quasistatics;
pub mod rng;
pub mod sim;
pub mod trainer;

/// Tool version stamped (next to the config hash) into every artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
