//! `point-policy`: generate scripted demonstrations, retarget them, train a
//! track policy, and evaluate it in the desk simulator.

mod commands;
mod failure;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;
use point_policy::simenv::{LiftingMode, TaskKind};

#[derive(Debug, Parser)]
#[command(name = "point-policy", version, about = "Point-track imitation learning in a kinematic desk simulator")]
pub struct Cli {
    /// TOML configuration file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (defaults to $POINT_POLICY_DATA, then the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Task (overrides the config).
    #[arg(long, global = true, value_enum)]
    pub task: Option<TaskArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Reach,
    PushBlock,
    PickPlace,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Reach => TaskKind::Reach,
            TaskArg::PushBlock => TaskKind::PushBlock,
            TaskArg::PickPlace => TaskKind::PickPlace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LiftingArg {
    Triangulated,
    Sensor,
}

impl From<LiftingArg> for LiftingMode {
    fn from(l: LiftingArg) -> Self {
        match l {
            LiftingArg::Triangulated => LiftingMode::Triangulated,
            LiftingArg::Sensor => LiftingMode::Sensor,
        }
    }
}

/// Observation noise overrides.
#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Pixel noise standard deviation (px).
    #[arg(long)]
    pub noise_px: Option<f64>,
    /// Sensor depth bias (meters).
    #[arg(long)]
    pub depth_bias: Option<f64>,
    /// Sensor depth noise standard deviation (meters).
    #[arg(long)]
    pub depth_jitter: Option<f64>,
}

/// Which policy to evaluate.
#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Trained checkpoint.
    #[arg(long, required_unless_present = "expert", conflicts_with = "expert")]
    pub checkpoint: Option<PathBuf>,
    /// Replay the scripted expert instead of a learned policy.
    #[arg(long)]
    pub expert: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render scripted two-view hand demonstrations.
    GenDemos {
        /// Number of demonstrations.
        #[arg(short = 'n', long, default_value_t = 20)]
        count: usize,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Triangulate and retarget hand demonstrations to robot keypoints.
    Retarget {
        /// Directory of hand demonstrations.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a policy on a directory of demonstrations.
    Train {
        /// Directory of hand or robot demonstrations.
        #[arg(long)]
        data: PathBuf,
        /// Number of optimization steps (overrides the config).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate a policy over seeded trials.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, value_enum, default_value = "triangulated")]
        lifting: LiftingArg,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Also write every rollout as a demonstration file.
        #[arg(long)]
        save_rollouts: bool,
    },
    /// Compare triangulated lifting against corrupted sensor depth.
    AblateDepth {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Check that robot keypoints map back to the poses they came from.
    RoundtripCheck {
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Render a loss curve or results CSV as SVG.
    Plot {
        /// CSV written by `train`, `eval` or `ablate-depth`.
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            return ExitCode::from(Failure::Usage(e.kind().to_string()).code());
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
