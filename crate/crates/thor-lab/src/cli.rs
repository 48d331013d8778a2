//! Operator surface: `train`, `eval`, `sweep`, `ablate`, and `check`
//! subcommands plus configuration loading and artifact management.
//!
//! Exit codes: 0 success, 2 missing config file, 3 parse error, 4 unknown
//! config key, 5 invariant violation, 10 runtime abort. All artifacts are
//! written under the output directory (`--out`, falling back to the
//! `THOR_LAB_OUT` environment variable) and carry a config-hash stamp.

use crate::config::{parse_config, ConfigError, RunConfig};
use crate::eval::{
    ablation_run, measure_peak_force_multi, measurement_conditions, tilt_force_sweep,
    write_peak_force_csv, write_tilt_sweep_csv, AblationVariant, ForceTrial,
};
use crate::quasistatics::{
    expected_tilt, max_interactive_force, zmp_location, HandForce, PullDirection,
};
use crate::sim::{CurriculumStage, Env};
use crate::trainer::{
    load_bundle, load_checkpoint, save_checkpoint, CheckpointError, Trainer,
};
use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISSING_FILE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_UNKNOWN_KEY: i32 = 4;
pub const EXIT_INVARIANT: i32 = 5;
pub const EXIT_RUNTIME: i32 = 10;

#[derive(Parser, Debug)]
#[command(
    name = "thor-lab",
    version,
    about = "Planar force-interaction humanoid lab: train, evaluate, sweep, ablate, check"
)]
pub struct Cli {
    /// JSON configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. --set gamma=0.5 or --set sim.horizon=500.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (fallback: $THOR_LAB_OUT, then ./thor_lab_out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Checkpoint to evaluate or resume from.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the policy bundle (resumes when --checkpoint is given).
    Train,
    /// Measure peak sustainable force of a checkpoint across conditions.
    Eval,
    /// Sweep constant forces and record realized vs predicted tilt.
    Sweep,
    /// Train and compare the ablation variants.
    Ablate,
    /// Run the cross-module invariant suite.
    Check,
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

#[cfg(unix)]
extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

#[cfg(unix)]
fn install_sigint_handler() {
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as libc::sighandler_t);
    }
}

#[cfg(not(unix))]
fn install_sigint_handler() {}

/// Entry point used by the binary and by in-process tests.
pub fn run_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = match parse_config(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return e.exit_code();
        }
    };
    let out_dir = resolve_out_dir(cli.out.as_deref());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return EXIT_RUNTIME;
    }

    match cli.command {
        Command::Train => cmd_train(&cfg, &out_dir, cli.checkpoint.as_deref(), cli.quiet),
        Command::Eval => cmd_eval(&cfg, &out_dir, cli.checkpoint.as_deref(), cli.quiet),
        Command::Sweep => cmd_sweep(&cfg, &out_dir, cli.checkpoint.as_deref(), cli.quiet),
        Command::Ablate => cmd_ablate(&cfg, &out_dir, cli.quiet),
        Command::Check => cmd_check(&cfg, cli.quiet),
    }
}

fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("THOR_LAB_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("thor_lab_out")
}

fn checkpoint_exit_code(e: &CheckpointError) -> i32 {
    match e {
        CheckpointError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
        CheckpointError::Corrupt(_) => EXIT_PARSE,
        _ => EXIT_RUNTIME,
    }
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path, resume: Option<&Path>, quiet: bool) -> i32 {
    install_sigint_handler();
    INTERRUPTED.store(false, Ordering::SeqCst);

    let mut trainer = match resume {
        Some(path) => match load_checkpoint(path) {
            Ok(ck) => match Trainer::from_checkpoint(cfg, &ck) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot resume: {e}");
                    return EXIT_RUNTIME;
                }
            },
            Err(e) => {
                eprintln!("cannot load checkpoint: {e}");
                return checkpoint_exit_code(&e);
            }
        },
        None => Trainer::new(cfg),
    };

    let log_path = out_dir.join("train_log.csv");
    let mut log = match std::fs::File::create(&log_path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("cannot create {}: {e}", log_path.display());
            return EXIT_RUNTIME;
        }
    };
    let agent_names: Vec<String> =
        trainer.bundle().agents.iter().map(|a| a.spec.name.clone()).collect();
    let mut header = String::from("iteration,stage");
    for n in &agent_names {
        header.push_str(&format!(",mean_reward_{n}"));
    }
    for n in &agent_names {
        header.push_str(&format!(",loss_{n}"));
    }
    header.push_str(",reg_c,total_loss,kl,clip_fraction,mean_episode_len,wall_time_s");
    if writeln!(log, "{}\n{}", crate::eval::artifact_stamp(cfg), header).is_err() {
        return EXIT_RUNTIME;
    }

    let ckpt_path = out_dir.join("checkpoint.json");
    let started = Instant::now();
    while trainer.iteration() < cfg.trainer.iterations {
        let stats = match trainer.run_iteration() {
            Ok(s) => s,
            Err(e) => {
                eprintln!("training aborted at iteration {}: {e}", trainer.iteration());
                let _ = save_checkpoint(&ckpt_path, &trainer.to_checkpoint());
                return EXIT_RUNTIME;
            }
        };
        let mut row = format!("{},{}", stats.iteration, stats.stage.index());
        for r in &stats.mean_rewards {
            row.push_str(&format!(",{r}"));
        }
        for l in &stats.update.agent_losses {
            row.push_str(&format!(",{l}"));
        }
        row.push_str(&format!(
            ",{},{},{},{},{},{:.3}",
            stats.update.reg_c,
            stats.update.total_loss,
            stats.update.kl,
            stats.update.clip_fraction,
            stats.mean_episode_len,
            started.elapsed().as_secs_f64()
        ));
        if writeln!(log, "{row}").is_err() {
            return EXIT_RUNTIME;
        }
        if !quiet && stats.iteration % 20 == 0 {
            println!(
                "iter {:>6} stage {} ep_len {:7.1} total_loss {:+.4}",
                stats.iteration,
                stats.stage.index(),
                stats.mean_episode_len,
                stats.update.total_loss
            );
        }
        let at_interval = cfg.trainer.checkpoint_interval > 0
            && stats.iteration % cfg.trainer.checkpoint_interval == 0;
        if at_interval || INTERRUPTED.load(Ordering::SeqCst) {
            if let Err(e) = save_checkpoint(&ckpt_path, &trainer.to_checkpoint()) {
                eprintln!("checkpoint write failed: {e}");
                return EXIT_RUNTIME;
            }
        }
        if INTERRUPTED.load(Ordering::SeqCst) {
            if !quiet {
                println!("interrupted; resumable checkpoint at {}", ckpt_path.display());
            }
            return EXIT_OK;
        }
    }
    if let Err(e) = save_checkpoint(&ckpt_path, &trainer.to_checkpoint()) {
        eprintln!("checkpoint write failed: {e}");
        return EXIT_RUNTIME;
    }
    if !quiet {
        println!("done: {} iterations, checkpoint at {}", trainer.iteration(), ckpt_path.display());
    }
    EXIT_OK
}

pub fn cmd_eval(cfg: &RunConfig, out_dir: &Path, checkpoint: Option<&Path>, quiet: bool) -> i32 {
    let Some(path) = checkpoint else {
        eprintln!("eval requires --checkpoint");
        return EXIT_MISSING_FILE;
    };
    let (_ck, mut bundle) = match load_bundle(path) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("cannot load checkpoint: {e}");
            return checkpoint_exit_code(&e);
        }
    };
    let mut rows: Vec<(String, ForceTrial)> = Vec::new();
    for condition in measurement_conditions() {
        let summary = measure_peak_force_multi(
            &mut bundle,
            cfg,
            &condition,
            cfg.seed.wrapping_add(7_000),
            cfg.eval.seeds,
        );
        if !quiet {
            println!(
                "{:<16} peak {:7.2} +- {:5.2} N over {} seeds",
                condition.label, summary.mean, summary.std_error, cfg.eval.seeds
            );
        }
        for t in summary.trials {
            rows.push(("policy".to_string(), t));
        }
    }
    write_artifact(out_dir.join("peak_force.csv"), |w| write_peak_force_csv(w, cfg, &rows))
}

pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path, checkpoint: Option<&Path>, quiet: bool) -> i32 {
    let Some(path) = checkpoint else {
        eprintln!("sweep requires --checkpoint");
        return EXIT_MISSING_FILE;
    };
    let (_ck, mut bundle) = match load_bundle(path) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("cannot load checkpoint: {e}");
            return checkpoint_exit_code(&e);
        }
    };
    let condition = &measurement_conditions()[0];
    let records = tilt_force_sweep(
        &mut bundle,
        cfg,
        condition,
        &cfg.eval.sweep_forces,
        cfg.seed.wrapping_add(9_000),
    );
    if !quiet {
        for r in &records {
            println!(
                "F {:6.1} N  tilt {:7.4} rad  predicted {:7.4} rad  survived {}",
                r.force, r.mean_tilt, r.predicted_tilt, r.survived
            );
        }
    }
    write_artifact(out_dir.join("tilt_sweep.csv"), |w| write_tilt_sweep_csv(w, cfg, &records))
}

pub fn cmd_ablate(cfg: &RunConfig, out_dir: &Path, quiet: bool) -> i32 {
    let mut rows: Vec<(String, ForceTrial)> = Vec::new();
    let mut table = Vec::new();
    for variant in AblationVariant::ALL {
        match ablation_run(cfg, variant) {
            Ok(metrics) => {
                if !quiet {
                    println!(
                        "{:<15} peak {:7.2} +- {:5.2} N",
                        variant.label(),
                        metrics.summary.mean,
                        metrics.summary.std_error
                    );
                }
                table.push((variant, metrics.summary.mean, metrics.summary.std_error));
                for t in metrics.summary.trials {
                    rows.push((variant.label().to_string(), t));
                }
            }
            Err(e) => {
                eprintln!("ablation {} failed: {e}", variant.label());
                return EXIT_RUNTIME;
            }
        }
    }
    let code = write_artifact(out_dir.join("peak_force.csv"), |w| {
        write_peak_force_csv(w, cfg, &rows)
    });
    if code != EXIT_OK {
        return code;
    }
    write_artifact(out_dir.join("ablation_summary.csv"), |w| {
        writeln!(w, "{}", crate::eval::artifact_stamp(cfg))?;
        writeln!(w, "variant,mean_peak_N,std_error_N")?;
        for (v, mean, se) in &table {
            writeln!(w, "{},{},{}", v.label(), mean, se)?;
        }
        Ok(())
    })
}

fn write_artifact<F>(path: PathBuf, write: F) -> i32
where
    F: FnOnce(&mut std::fs::File) -> std::io::Result<()>,
{
    match std::fs::File::create(&path) {
        Ok(mut f) => match write(&mut f) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("cannot write {}: {e}", path.display());
                EXIT_RUNTIME
            }
        },
        Err(e) => {
            eprintln!("cannot create {}: {e}", path.display());
            EXIT_RUNTIME
        }
    }
}

/// Cross-module invariant suite; exits nonzero on any failure.
pub fn cmd_check(cfg: &RunConfig, quiet: bool) -> i32 {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        if !quiet || !ok {
            println!("check {name}: {}", if ok { "ok" } else { "FAIL" });
        }
        if !ok {
            failures += 1;
        }
    };

    // Statics: envelope/tilt round trip and ZMP affinity.
    let geom = &cfg.geometry;
    let beta_lim = cfg.reward.beta_lim;
    let roundtrip = (0..10).all(|i| {
        let alpha = 0.12 * i as f64;
        match max_interactive_force(geom, alpha, beta_lim) {
            Ok(f_max) => {
                let f = HandForce::new(f_max, alpha, PullDirection::TowardPosX);
                (expected_tilt(geom, &f, beta_lim).beta - beta_lim).abs() < 1e-9
            }
            Err(_) => false,
        }
    });
    check("statics_tilt_roundtrip", roundtrip);

    let affine = {
        let f = HandForce::new(40.0, 0.2, PullDirection::TowardNegX);
        let slope = geom.weight() / (geom.weight() + f.vertical_load());
        (0..20).all(|i| {
            let a = -0.3 + 0.03 * i as f64;
            let za = zmp_location(geom, &f, a, 1.0).unwrap();
            let zb = zmp_location(geom, &f, a + 0.05, 1.0).unwrap();
            (zb - za - slope * 0.05).abs() < 1e-9
        })
    };
    check("statics_zmp_affinity", affine);

    // Gradient fidelity on random small networks.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC0FFEE);
    use rand_chacha::rand_core::SeedableRng;
    let grad_ok = (0..10).all(|i| {
        let dims = [3 + i % 4, 8, 5, 2];
        crate::nn::finite_difference_check(&dims, &mut rng, 1e-5) < 1e-4
    });
    check("gradient_fidelity", grad_ok);

    // GAE recursion vs the literal truncated sum.
    let gae_ok = {
        use rand::Rng;
        let mut ok = true;
        for _ in 0..100 {
            let t_len = rng.gen_range(1..=64);
            let rewards: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..t_len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let dones: Vec<bool> = (0..t_len).map(|_| rng.gen_bool(0.1)).collect();
            let bootstrap = rng.gen_range(-2.0..2.0);
            let (adv, _) =
                crate::trainer::compute_gae(&rewards, &values, &dones, bootstrap, 0.98, 0.95);
            // Literal truncated discounted sum of TD residuals.
            for t in 0..t_len {
                let mut acc = 0.0;
                let mut w = 1.0;
                for l in t..t_len {
                    let nd = if dones[l] { 0.0 } else { 1.0 };
                    let nv = if l + 1 == t_len { bootstrap } else { values[l + 1] };
                    acc += w * (rewards[l] + 0.98 * nv * nd - values[l]);
                    if dones[l] {
                        break;
                    }
                    w *= 0.98 * 0.95;
                }
                if (adv[t] - acc).abs() >= 1e-10 {
                    ok = false;
                }
            }
        }
        ok
    };
    check("gae_equivalence", gae_ok);

    // Simulator determinism.
    let det_ok = {
        let run = || {
            let mut env = Env::new(cfg);
            let mut acc = Vec::new();
            acc.push(env.reset(123, CurriculumStage::Stage1));
            for k in 0..20 {
                let a = [(k as f64 * 0.07).sin() * 0.1; 6];
                match env.step(&a) {
                    Ok(r) => {
                        let done = r.done;
                        acc.push(r);
                        if done {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
            acc
        };
        run() == run()
    };
    check("sim_determinism", det_ok);

    // Loss identity on one tiny training iteration.
    let identity_ok = {
        let mut small = cfg.clone();
        small.net.hidden = vec![12, 8];
        small.trainer.rollout_len = 4;
        small.trainer.env_count = 2;
        small.trainer.epochs = 1;
        small.trainer.minibatches = 2;
        match Trainer::new(&small).run_iteration() {
            Ok(stats) => {
                let rhs = stats.update.agent_losses.iter().sum::<f64>()
                    + small.trainer.reg_weight * stats.update.reg_c;
                (stats.update.total_loss - rhs).abs() < 1e-12
            }
            Err(_) => false,
        }
    };
    check("loss_identity", identity_ok);

    if failures == 0 {
        EXIT_OK
    } else {
        eprintln!("{failures} invariant check(s) failed");
        EXIT_RUNTIME
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn args(v: &[&str]) -> Vec<String> {
        std::iter::once("thor-lab".to_string()).chain(v.iter().map(|s| s.to_string())).collect()
    }

    #[test]
    fn train_smoke_produces_log_and_checkpoint() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("run");
        let code = run_with_args(args(&[
            "train",
            "--out",
            out.to_str().unwrap(),
            "--quiet",
            "--set",
            "iterations=2",
            "--set",
            "env_count=2",
            "--set",
            "rollout_len=4",
            "--set",
            "epochs=1",
            "--set",
            "minibatches=2",
            "--set",
            "net.hidden=[12,8]",
            "--set",
            "sim.horizon=30",
        ]));
        assert_eq!(code, EXIT_OK);
        let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
        let rows: Vec<&str> = log.lines().collect();
        // Stamp, header, and exactly two iteration rows.
        assert!(rows[0].starts_with("# config_hash="));
        assert!(rows[1].starts_with("iteration,stage"));
        assert_eq!(rows.len(), 4);
        assert!(out.join("checkpoint.json").exists());
    }

    #[test]
    fn eval_on_fresh_checkpoint_completes() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("run");
        let common = [
            "--set",
            "iterations=1",
            "--set",
            "env_count=2",
            "--set",
            "rollout_len=4",
            "--set",
            "epochs=1",
            "--set",
            "minibatches=2",
            "--set",
            "net.hidden=[12,8]",
            "--set",
            "sim.horizon=30",
        ];
        let mut train_args = vec!["train", "--out", out.to_str().unwrap(), "--quiet"];
        train_args.extend_from_slice(&common);
        assert_eq!(run_with_args(args(&train_args)), EXIT_OK);

        let ckpt = out.join("checkpoint.json");
        let mut eval_args = vec![
            "eval",
            "--out",
            out.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--quiet",
            "--set",
            "eval.seeds=1",
            "--set",
            "eval.hold_seconds=0.4",
        ];
        eval_args.extend_from_slice(&common);
        assert_eq!(run_with_args(args(&eval_args)), EXIT_OK);
        let csv = std::fs::read_to_string(out.join("peak_force.csv")).unwrap();
        assert!(csv.lines().count() >= 3);
        for line in csv.lines().skip(2) {
            let peak: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!(peak >= 0.0);
        }
    }

    #[test]
    fn exit_codes_for_config_errors() {
        assert_eq!(run_with_args(args(&["train", "--config", "/no/such/file.json"])), 2);
        let dir = tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{oops").unwrap();
        assert_eq!(run_with_args(args(&["train", "--config", bad.to_str().unwrap()])), 3);
        assert_eq!(run_with_args(args(&["train", "--set", "not_a_key=1"])), 4);
        assert_eq!(run_with_args(args(&["train", "--set", "gamma=1.5"])), 5);
    }

    #[test]
    fn check_command_passes_on_defaults() {
        let code = run_with_args(args(&["check", "--quiet"]));
        assert_eq!(code, EXIT_OK);
    }

    #[test]
    fn missing_checkpoint_propagates() {
        let dir = tempdir().unwrap();
        let out = dir.path().join("o");
        let code = run_with_args(args(&[
            "eval",
            "--out",
            out.to_str().unwrap(),
            "--checkpoint",
            "/no/such/ckpt.json",
        ]));
        assert_eq!(code, EXIT_MISSING_FILE);
    }
}
