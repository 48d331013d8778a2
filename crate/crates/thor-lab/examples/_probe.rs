use thor_lab::config::RunConfig;
use thor_lab::eval::{Controller, TiltOracleController};
use thor_lab::sim::{CurriculumStage, Env, EpisodeForce};
use thor_lab::quasistatics::PullDirection;

fn main() {
    let mut cfg = RunConfig::default();
    cfg.sim.reset_jitter = 0.0;
    let mut env = Env::new(&cfg);
    env.set_force_override(Some(EpisodeForce {
        magnitude: 50.0, angle: 0.0, direction: PullDirection::TowardPosX, ramp_steps: 125,
    }));
    let mut ctrl = TiltOracleController::new(&cfg);
    let mut step = env.reset(1, CurriculumStage::Stage2);
    for t in 0..400 {
        let a = ctrl.act(&step.observation, &step.privileged);
        match env.step(&a) {
            Ok(r) => {
                if t % 25 == 0 || r.done {
                    println!(
                        "t={t:>3} F={:>5.1} cmd_ankle={:+.3} pitch={:+.4} q0={:+.4} zmp={:+.4} done={} {:?}",
                        env.applied_force().magnitude, a[0], r.privileged.torso_pitch,
                        r.observation.q[0], env.last_zmp(), r.done, r.termination_reason
                    );
                    if r.done { break; }
                }
                step = r;
            }
            Err(e) => { println!("{e}"); break; }
        }
    }
}
