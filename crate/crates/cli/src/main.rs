use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use dqm_core::checkpoint::{write_atomic, Checkpoint};
use dqm_core::imu_io::{self, Profile, Trajectory};
use dqm_core::ins::{self, Attitude, NavState};
use dqm_core::qnet::OptimizerKind;
use dqm_core::trainer::{self, EpisodeLog};
use dqm_core::{Error, Hyperparams, Result, RewardKind};

const DEFAULTS_HELP: &str = "\
Training defaults:
  BATCH_SIZE 32, LR 0.001, EPSILON (greedy rate) 0.9, GAMMA 0.9,
  TARGET_REPLACE_ITER 100, MEMORY_CAPACITY 2000, N_ACTIONS 2, N_STATES 6,
  hidden nodes 10, kp 1.0, ki 0.5, kd 0.2, reward sigmoid, episodes 20, seed 0,
  optimizer adam.
Precedence: built-in defaults < --config file < command-line flags.
Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.";

#[derive(Debug, Parser)]
#[command(name = "dqm", version, about = "PID-modulated deep Q-learning on IMU logs", after_help = DEFAULTS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a fresh agent on an IMU log and write a checkpoint.
    #[command(after_help = DEFAULTS_HELP)]
    Train(TrainArgs),
    /// Continue a checkpoint over another IMU log (learning enabled) and report curves.
    Eval(EvalArgs),
    /// Run the strapdown mechanization over an IMU log and write a navigation CSV.
    Propagate(PropagateArgs),
    /// Write a synthetic IMU log in the EuRoC CSV layout.
    Synth(SynthArgs),
}

fn parse_reward(s: &str) -> std::result::Result<RewardKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        _ => Err(format!("unknown optimizer {s:?}; expected adam or sgd")),
    }
}

#[derive(Debug, Args)]
struct Overrides {
    /// Random seed (default 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of passes over the log (default 20)
    #[arg(long)]
    episodes: Option<usize>,
    /// Reward function: inverse_proportion, sigmoid, inverse_log, inverse_quadratic,
    /// inverse_sin, inverse_cos, inverse_tan (default sigmoid)
    #[arg(long, value_parser = parse_reward)]
    reward: Option<RewardKind>,
    /// Minibatch size (default 32)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate (default 0.001)
    #[arg(long)]
    lr: Option<f64>,
    /// Probability of the greedy action (default 0.9)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Discount factor (default 0.9)
    #[arg(long)]
    gamma: Option<f64>,
    /// Learn steps between target-network syncs (default 100)
    #[arg(long)]
    target_replace_iter: Option<u64>,
    /// Replay buffer capacity (default 2000)
    #[arg(long)]
    memory_capacity: Option<usize>,
    /// Proportional gain (default 1.0)
    #[arg(long)]
    kp: Option<f64>,
    /// Integral gain (default 0.5)
    #[arg(long)]
    ki: Option<f64>,
    /// Derivative gain (default 0.2)
    #[arg(long)]
    kd: Option<f64>,
    /// adam or sgd (default adam)
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    /// Do not learn until the replay buffer is full
    #[arg(long)]
    learn_after_full: bool,
    /// Z-score each state channel over the log before training
    #[arg(long)]
    normalize_states: bool,
}

impl Overrides {
    fn apply(&self, h: &mut Hyperparams) {
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { h.$target = v; })*
            };
        }
        set!(
            seed => seed, episodes => episodes, reward => reward_kind, batch_size => batch_size,
            lr => lr, epsilon => epsilon, gamma => gamma,
            target_replace_iter => target_replace_iter, memory_capacity => memory_capacity,
            kp => kp, ki => ki, kd => kd, optimizer => optimizer,
        );
        if self.learn_after_full {
            h.learn_after_full = true;
        }
        if self.normalize_states {
            h.normalize_states = true;
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// EuRoC-format IMU CSV used for training
    #[arg(long)]
    imu: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    out_model: PathBuf,
    /// JSON file of hyperparameters (field names or table aliases such as BATCH_SIZE)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for reward_curve.csv and loss_curve.csv
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Also write SVG line charts next to the curve CSVs
    #[arg(long)]
    svg: bool,
    /// Write the effective hyperparameters as JSON to this path
    #[arg(long)]
    dump_config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// EuRoC-format IMU CSV used for validation
    #[arg(long)]
    imu: PathBuf,
    /// Checkpoint produced by `train`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
    /// Number of validation passes (default 20)
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    /// Write the checkpoint reached at the end of validation
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PropagateArgs {
    #[arg(long)]
    imu: PathBuf,
    /// Navigation CSV output
    #[arg(long)]
    out: PathBuf,
    /// JSON initial state: lat_deg, lon_deg, alt_m, roll_deg, pitch_deg, yaw_deg,
    /// vn, ve, vd (m/s). Missing keys take the defaults 39.975172 N, 116.344695283 E,
    /// 30 m, level, at rest.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// stationary, constant_turn or random_walk
    #[arg(long, value_parser = parse_profile)]
    profile: Profile,
    #[arg(long)]
    duration_s: f64,
    #[arg(long)]
    rate_hz: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Latitude in degrees used for gravity
    #[arg(long, default_value_t = ins::DEFAULT_LAT_DEG, allow_negative_numbers = true)]
    lat: f64,
    /// Height in metres used for gravity
    #[arg(long, default_value_t = ins::DEFAULT_ALT_M, allow_negative_numbers = true)]
    alt: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InitFile {
    lat_deg: f64,
    lon_deg: f64,
    alt_m: f64,
    roll_deg: f64,
    pitch_deg: f64,
    yaw_deg: f64,
    vn: f64,
    ve: f64,
    vd: f64,
}

impl Default for InitFile {
    fn default() -> Self {
        Self {
            lat_deg: ins::DEFAULT_LAT_DEG,
            lon_deg: ins::DEFAULT_LON_DEG,
            alt_m: ins::DEFAULT_ALT_M,
            roll_deg: 0.0,
            pitch_deg: 0.0,
            yaw_deg: 0.0,
            vn: 0.0,
            ve: 0.0,
            vd: 0.0,
        }
    }
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    imu_io::parse_imu_csv(BufReader::new(file)).map_err(|e| e.context(path.display()))
}

fn print_episode(tag: &str, log: &EpisodeLog) {
    let loss = log
        .mean_loss()
        .map_or_else(|| "n/a".to_string(), |l| format!("{l:.6e}"));
    println!(
        "{tag} episode {:>3}  total_reward {:.6}  mean_loss {loss}  adjust {}  no_adjust {}",
        log.episode, log.total_reward, log.action_counts[0], log.action_counts[1]
    );
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut hyper = match &args.config {
        Some(path) => Hyperparams::from_file(path)?,
        None => Hyperparams::default(),
    };
    args.overrides.apply(&mut hyper);
    hyper.validate()?;
    if let Some(path) = &args.dump_config {
        write_atomic(path, format!("{}\n", hyper.to_json_pretty()).as_bytes())?;
    }

    let traj = read_trajectory(&args.imu)?;
    let (ckpt, logs) = trainer::train_with(&hyper, &traj, |log| print_episode("train", log))?;
    ckpt.save(&args.out_model)?;
    if let Some(dir) = &args.curves {
        trainer::export_curves(&logs, dir, args.svg)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.model)?;
    let traj = read_trajectory(&args.imu)?;
    if traj.fingerprint() != ckpt.meta.data_fingerprint {
        eprintln!(
            "warning: {} differs from the data the model was trained on (fingerprint {} vs {})",
            args.imu.display(),
            &traj.fingerprint()[..16],
            ckpt.meta
                .data_fingerprint
                .get(..16)
                .unwrap_or(&ckpt.meta.data_fingerprint)
        );
    }
    let (after, logs) = trainer::evaluate_with(&ckpt, &traj, args.episodes, |log| {
        print_episode("eval", log)
    })?;
    if let Some(dir) = &args.curves {
        trainer::export_curves(&logs, dir, args.svg)?;
    }
    if let Some(path) = &args.out_model {
        after.save(path)?;
    }
    Ok(())
}

fn cmd_propagate(args: PropagateArgs) -> Result<()> {
    let traj = read_trajectory(&args.imu)?;
    let init = match &args.init {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<InitFile>(&text)
                .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        }
        None => InitFile::default(),
    };
    if init.lat_deg.is_nan() || init.lat_deg.abs() > 90.0 {
        return Err(Error::usage(format!(
            "initial latitude {} outside [-90, 90]",
            init.lat_deg
        )));
    }
    let start = NavState {
        t_ns: traj.samples()[0].t_ns,
        lat: init.lat_deg.to_radians(),
        lon: ins::wrap_pi(init.lon_deg.to_radians()),
        alt: init.alt_m,
        vel_ned: [init.vn, init.ve, init.vd],
        att: Attitude::new(
            init.roll_deg.to_radians(),
            init.pitch_deg.to_radians(),
            init.yaw_deg.to_radians(),
        ),
    };
    let states = ins::propagate(&start, &traj)?;
    let mut out = Vec::new();
    imu_io::write_nav_csv(&states, &mut out)?;
    write_atomic(&args.out, &out)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let traj = imu_io::synth_trajectory(
        args.profile,
        args.duration_s,
        args.rate_hz,
        args.lat,
        args.alt,
        args.seed,
    )?;
    let mut out = Vec::new();
    imu_io::write_imu_csv(&traj, &mut out)?;
    write_atomic(&args.out, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
