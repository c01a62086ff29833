use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use serde::Serialize;

use crate::failure::Failure;
use crate::{Cli, Command, NoiseArgs, PolicyArgs};
use point_policy::control::roundtrip_check;
use point_policy::dataio::{data_root, read_demo, subsample, write_demo, Config, DataError, Demonstration, Role, TaskSchema};
use point_policy::pipeline::{eval_options, prepare_demos, task_spec, train_on_demos};
use point_policy::policy::{self, PolicyParameters};
use point_policy::retarget::retarget_demo;
use point_policy::simenv::{evaluate, object_keypoints, render_demo, scene_seed, EvalPolicy, EvalReport, LiftingMode, SimError, TaskSpec, DEMO_STREAM};

const ROUNDTRIP_TOLERANCE: f64 = 1e-6;
const ABLATION_DEPTH_BIAS: f64 = 0.02;
const ABLATION_DEPTH_JITTER: f64 = 0.01;

struct RunContext {
    config: Config,
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let Cli {
        config,
        seed,
        out,
        task,
        command,
    } = cli;
    let mut cfg = match &config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(task) = task {
        cfg.task.kind = task.into();
    }
    let out = out.or_else(data_root).unwrap_or_else(|| PathBuf::from("."));
    let mut ctx = RunContext { config: cfg, out };

    match command {
        Command::GenDemos { count, noise } => {
            apply_noise(&mut ctx.config, &noise);
            ctx.config.validate()?;
            gen_demos(&ctx, count)
        }
        Command::Retarget { data } => {
            ctx.config.validate()?;
            retarget(&ctx, &data)
        }
        Command::Train { data, steps } => {
            if let Some(steps) = steps {
                ctx.config.train.steps = steps;
            }
            ctx.config.validate()?;
            train(&ctx, &data)
        }
        Command::Eval {
            policy,
            trials,
            lifting,
            noise,
            save_rollouts,
        } => {
            apply_noise(&mut ctx.config, &noise);
            ctx.config.validate()?;
            eval(&ctx, &policy, trials, lifting.into(), save_rollouts)
        }
        Command::AblateDepth { policy, trials, noise } => {
            if let Some(px) = noise.noise_px {
                ctx.config.noise.pixel_sigma = px;
            }
            ctx.config.validate()?;
            ablate_depth(&ctx, &policy, trials, &noise)
        }
        Command::RoundtripCheck { count } => {
            ctx.config.validate()?;
            roundtrip(&ctx, count)
        }
        Command::Plot { input } => plot(&ctx, &input),
    }
}

fn apply_noise(config: &mut Config, noise: &NoiseArgs) {
    if let Some(px) = noise.noise_px {
        config.noise.pixel_sigma = px;
    }
    if let Some(b) = noise.depth_bias {
        config.noise.depth_bias = b;
    }
    if let Some(j) = noise.depth_jitter {
        config.noise.depth_jitter = j;
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(Failure::Runtime)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Runtime)?;
    for row in rows {
        w.serialize(row).map_err(|e| Failure::Runtime(e.into()))?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}

/// Every `*.jsonl` file in `dir`, sorted by name.
fn read_demo_dir(dir: &Path) -> Result<Vec<(PathBuf, Demonstration)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::data(format!("cannot read data directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DataError::EmptyDataset.into());
    }
    paths
        .into_iter()
        .map(|p| {
            let demo = read_demo(&p)?;
            Ok((p, demo))
        })
        .collect()
}

fn is_hand_demo(demo: &Demonstration) -> bool {
    !demo.indices_of(Role::Hand).is_empty()
}

fn gen_demos(ctx: &RunContext, count: usize) -> Result<(), Failure> {
    let config = &ctx.config;
    let spec = task_spec(config)?;
    let cameras = config.camera_records();
    ensure_dir(&ctx.out)?;
    let mut written = 0;
    let mut failed = 0;
    for i in 0..count {
        let seed = scene_seed(config.seed, DEMO_STREAM, i as u64);
        match render_demo(&spec, seed, &cameras, &config.noise) {
            Ok((demo, _)) => {
                write_demo(&ctx.out.join(format!("demo_{i:04}.jsonl")), &demo)?;
                written += 1;
            }
            Err(SimError::PlanningFailed(msg)) => {
                warn!("demo {i} (scene seed {seed}): planning failed: {msg}");
                failed += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    println!(
        "{}: wrote {written}/{count} demos to {} (seed {}, planning failures {failed})",
        spec.kind,
        ctx.out.display(),
        config.seed
    );
    if count > 0 && written == 0 {
        return Err(Failure::runtime("every demonstration failed to plan"));
    }
    Ok(())
}

fn retarget(ctx: &RunContext, data: &Path) -> Result<(), Failure> {
    let demos = read_demo_dir(data)?;
    let fallback = ctx.config.camera_models()?;
    ensure_dir(&ctx.out)?;
    for (path, demo) in &demos {
        if !is_hand_demo(demo) {
            return Err(Failure::data(format!("{} has no hand keypoints", path.display())));
        }
        let cameras = if demo.header.cameras.is_empty() {
            fallback.clone()
        } else {
            demo.cameras()?
        };
        let robot = retarget_demo(demo, &cameras, &ctx.config.robot)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        write_demo(&ctx.out.join(format!("robot_{name}")), &robot)?;
    }
    println!("retargeted {} demos into {}", demos.len(), ctx.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ValRow {
    step: u64,
    loss: f64,
}

fn train(ctx: &RunContext, data: &Path) -> Result<(), Failure> {
    let config = &ctx.config;
    let demos = read_demo_dir(data)?;
    let (hand, robot): (Vec<_>, Vec<_>) = demos.into_iter().map(|(_, d)| d).partition(is_hand_demo);
    let mut prepared = prepare_demos(config, &hand)?;
    let stride = config.data.subsample_stride;
    for demo in &robot {
        if demo.header.rate_hz > config.control.control_hz * (1.0 + 1e-6) {
            prepared.push(subsample(demo, stride));
        } else {
            prepared.push(demo.clone());
        }
    }
    info!(
        "training on {} demos ({} hand, {} robot) for {} steps, seed {}",
        prepared.len(),
        hand.len(),
        robot.len(),
        config.train.steps,
        config.train.seed
    );
    ensure_dir(&ctx.out)?;
    let out = ctx.out.clone();
    let outcome = train_on_demos(config, &prepared, &mut |step, params| {
        policy::save(params, &out.join(format!("policy_step_{step:06}.ckpt")))
    })?;
    policy::save(&outcome.params, &ctx.out.join("policy.ckpt"))?;
    write_csv(&ctx.out.join("loss.csv"), &outcome.curve)?;
    let val: Vec<ValRow> = outcome.val_curve.iter().map(|&(step, loss)| ValRow { step, loss }).collect();
    write_csv(&ctx.out.join("val_loss.csv"), &val)?;
    write_output(&ctx.out.join("config.toml"), config.to_toml_string().as_bytes())?;
    let last = outcome.curve.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "{}: trained {} steps (seed {}), final loss {last:.6}, checkpoint {}",
        config.task.kind,
        config.train.steps,
        config.train.seed,
        ctx.out.join("policy.ckpt").display()
    );
    Ok(())
}

fn load_policy(args: &PolicyArgs) -> Result<Option<PolicyParameters>, Failure> {
    match &args.checkpoint {
        Some(path) if !args.expert => Ok(Some(policy::load(path)?)),
        _ => Ok(None),
    }
}

fn run_eval(
    config: &Config,
    spec: &TaskSpec,
    params: Option<&PolicyParameters>,
    trials: usize,
    lifting: LiftingMode,
) -> Result<EvalReport, Failure> {
    let options = eval_options(config, trials, lifting)?;
    let policy = match params {
        Some(p) => EvalPolicy::Learned(p),
        None => EvalPolicy::Expert,
    };
    Ok(evaluate(policy, spec, &options)?)
}

fn rollout_schema(config: &Config, spec: &TaskSpec, params: Option<&PolicyParameters>) -> TaskSchema {
    match params {
        Some(p) => p.schema.clone(),
        None => TaskSchema {
            task: spec.kind.name().to_string(),
            robot: config.robot.offsets().names().to_vec(),
            object: object_keypoints(spec.kind).into_iter().map(|(n, _)| n.to_string()).collect(),
        },
    }
}

fn eval(ctx: &RunContext, args: &PolicyArgs, trials: usize, lifting: LiftingMode, save_rollouts: bool) -> Result<(), Failure> {
    let config = &ctx.config;
    let params = load_policy(args)?;
    let spec = task_spec(config)?;
    let report = run_eval(config, &spec, params.as_ref(), trials, lifting)?;
    ensure_dir(&ctx.out)?;
    write_csv(&ctx.out.join("trials.csv"), &report.records)?;
    if save_rollouts {
        let dir = ctx.out.join("rollouts");
        ensure_dir(&dir)?;
        let schema = rollout_schema(config, &spec, params.as_ref());
        for (i, r) in report.rollouts.iter().enumerate() {
            let demo = r.to_demonstration(&schema, config.control.control_hz);
            write_demo(&dir.join(format!("rollout_{i:04}.jsonl")), &demo)?;
        }
    }
    println!(
        "{}: {}/{} (lifting {lifting}, seed {})",
        spec.kind,
        report.successes(),
        report.trials(),
        config.seed
    );
    Ok(())
}

fn ablate_depth(ctx: &RunContext, args: &PolicyArgs, trials: usize, noise: &NoiseArgs) -> Result<(), Failure> {
    let params = load_policy(args)?;
    let spec = task_spec(&ctx.config)?;
    let triangulated = run_eval(&ctx.config, &spec, params.as_ref(), trials, LiftingMode::Triangulated)?;
    let mut sensor_cfg = ctx.config.clone();
    sensor_cfg.noise.depth_bias = noise.depth_bias.unwrap_or(ABLATION_DEPTH_BIAS);
    sensor_cfg.noise.depth_jitter = noise.depth_jitter.unwrap_or(ABLATION_DEPTH_JITTER);
    sensor_cfg.validate()?;
    let sensor = run_eval(&sensor_cfg, &spec, params.as_ref(), trials, LiftingMode::Sensor)?;

    ensure_dir(&ctx.out)?;
    let rows: Vec<_> = triangulated.records.iter().chain(&sensor.records).cloned().collect();
    write_csv(&ctx.out.join("ablation.csv"), &rows)?;
    println!(
        "{}: triangulated {}/{}, sensor depth (bias {} m, jitter {} m) {}/{} (seed {})",
        spec.kind,
        triangulated.successes(),
        triangulated.trials(),
        sensor_cfg.noise.depth_bias,
        sensor_cfg.noise.depth_jitter,
        sensor.successes(),
        sensor.trials(),
        ctx.config.seed
    );
    let verdict = if triangulated.successes() >= sensor.successes() {
        "triangulated depth performs at least as well as sensor depth"
    } else {
        "sensor depth outperformed triangulated depth"
    };
    println!("verdict: {verdict}");
    Ok(())
}

fn roundtrip(ctx: &RunContext, count: usize) -> Result<(), Failure> {
    let report = roundtrip_check(count, ctx.config.seed, &ctx.config.robot).map_err(|e| Failure::Runtime(e.into()))?;
    println!(
        "roundtrip over {} poses (seed {}): max position error {:.3e} m, max orientation error {:.3e} rad",
        report.count,
        ctx.config.seed,
        report.max_position_error,
        report.max_orientation_error
    );
    if report.max_position_error > ROUNDTRIP_TOLERANCE || report.max_orientation_error > ROUNDTRIP_TOLERANCE {
        return Err(Failure::runtime(format!(
            "roundtrip error exceeds {ROUNDTRIP_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn plot(ctx: &RunContext, input: &Path) -> Result<(), Failure> {
    let svg = crate::plot::render_csv(input)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".to_string());
    ensure_dir(&ctx.out)?;
    let path = ctx.out.join(format!("{stem}.svg"));
    write_output(&path, svg.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}
