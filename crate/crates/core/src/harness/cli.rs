//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{CameraPolicyKind, NavPolicyKind, ResolvedPolicy, RunConfig, SceneSource, TrainEnvKind, OUTPUT_ENV};
use super::episode::{run_episode, EpisodeConfig};
use super::experiments::{eval, explore, generate_files, run, train_policy};
use super::generate::SceneKind;
use super::render::render_frames;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "activecam", version, about = "Active-camera multi-object navigation in 2D scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode per seed and write metrics CSV plus trajectory JSONL.
    Run(Common),
    /// Train a camera or joint policy with PPO.
    Train(TrainArgs),
    /// Compare policies over goal counts and seeds.
    Eval(EvalArgs),
    /// Exploration protocol: area and find-all curves per camera policy.
    Explore(ExploreArgs),
    /// Generate a scene and episodes.
    Gen(GenArgs),
    /// Render PNG frames of one episode.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Scene file (text or JSON) instead of the configured source.
    #[arg(long, conflicts_with = "generate")]
    scene: Option<PathBuf>,
    /// Generated scene as `kind:size_m:seed`, e.g. `maze:10:3`.
    #[arg(long)]
    generate: Option<String>,
    /// Episode file pinning start and goals.
    #[arg(long)]
    episode: Option<PathBuf>,
    /// Camera policy: fixed, random, swing, heuristic, learned:<ckpt> or joint:<ckpt>.
    #[arg(long)]
    camera: Option<CameraPolicyKind>,
    /// Navigation policy: fbe or joint:<ckpt>.
    #[arg(long)]
    nav: Option<NavPolicyKind>,
    /// Goals per generated episode.
    #[arg(long)]
    n_goals: Option<usize>,
    /// Step budget per episode.
    #[arg(long)]
    budget: Option<u32>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory (the ACTIVECAM_OUT variable takes precedence).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample neural actions instead of taking the most likely one.
    #[arg(long)]
    stochastic: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training environment: alignment, camera or joint.
    #[arg(long)]
    env: Option<TrainEnvKind>,
    /// PPO updates.
    #[arg(long)]
    updates: Option<usize>,
    /// Seed for initialisation and rollouts.
    #[arg(long)]
    train_seed: Option<u64>,
    /// Disable the motor-actuation penalty in the reward.
    #[arg(long)]
    no_turn_penalty: bool,
    /// Checkpoint path, relative paths resolve inside the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated camera policies; `joint:<ckpt>` also drives navigation.
    #[arg(long, value_delimiter = ',', default_value = "fixed,random,swing,heuristic")]
    policies: Vec<CameraPolicyKind>,
    /// Comma-separated goal counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    goal_counts: Vec<usize>,
}

#[derive(Debug, Args)]
struct ExploreArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated camera policies.
    #[arg(long, value_delimiter = ',', default_value = "fixed,random,heuristic")]
    cameras: Vec<CameraPolicyKind>,
    /// Number of generated scenes (generated scene sources only).
    #[arg(long, default_value_t = 5)]
    scenes: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Generator: rooms, maze or corridors.
    #[arg(long, default_value = "rooms")]
    kind: SceneKind,
    /// Scene edge length in meters.
    #[arg(long, default_value_t = 10.0)]
    size: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Goals per episode.
    #[arg(long, default_value_t = 3)]
    n_goals: usize,
    /// Episodes to sample in the scene.
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    /// Output directory (the ACTIVECAM_OUT variable takes precedence).
    #[arg(long, default_value = "scenes")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    /// Render every this many steps.
    #[arg(long)]
    stride: Option<u32>,
    /// Seed of the episode to render; defaults to the first configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_generated(s: &str) -> Result<SceneSource> {
    let bad = || Error::InvalidConfig(format!("--generate expects kind:size_m:seed, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let [kind, size, seed] = parts[..] else { return Err(bad()) };
    Ok(SceneSource::Generated {
        kind: kind.parse()?,
        size_m: size.parse().map_err(|_| bad())?,
        seed: seed.parse().map_err(|_| bad())?,
    })
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.scene {
            cfg.scene = SceneSource::File { path: p.clone() };
        }
        if let Some(g) = &self.generate {
            cfg.scene = parse_generated(g)?;
        }
        if let Some(e) = &self.episode {
            cfg.episode = Some(e.clone());
        }
        if let Some(c) = &self.camera {
            cfg.camera = c.clone();
        }
        if let Some(n) = &self.nav {
            cfg.nav = n.clone();
        }
        if let Some(n) = self.n_goals {
            cfg.n_goals = n;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.stochastic |= self.stochastic;
        // A joint camera implies joint navigation unless stated otherwise.
        if let (CameraPolicyKind::Joint(p), None) = (&cfg.camera, &self.nav) {
            cfg.nav = NavPolicyKind::Joint(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn nav_for(camera: &CameraPolicyKind) -> NavPolicyKind {
    match camera {
        CameraPolicyKind::Joint(p) => NavPolicyKind::Joint(p.clone()),
        _ => NavPolicyKind::Fbe,
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(common) => {
            let cfg = common.config()?;
            let report = run(&cfg)?;
            let a = &report.aggregate;
            let fmt = |m: Option<crate::metrics::MeanStd>| m.map_or_else(|| "n/a".to_string(), |m| format!("{:.3} ± {:.3}", m.mean, m.std));
            println!(
                "{} episodes: SPL {} PPL {} Success {:.3} Progress {:.3}",
                report.rows.len(),
                fmt(a.spl),
                fmt(a.ppl),
                a.success.mean,
                a.progress.mean
            );
            println!("wrote {} and {}", report.metrics_csv.display(), report.trajectory_jsonl.display());
        }
        Command::Train(args) => {
            let mut cfg = args.common.config()?;
            if let Some(e) = args.env {
                cfg.train.env = e;
            }
            if let Some(u) = args.updates {
                cfg.train.updates = u;
            }
            if let Some(s) = args.train_seed {
                cfg.train.seed = s;
            }
            if let Some(c) = args.checkpoint {
                cfg.train.checkpoint = c;
            }
            if args.no_turn_penalty {
                cfg.reward.turn_penalty = false;
            }
            let report = train_policy(&cfg, |p| {
                if p.update % 10 == 0 {
                    eprintln!(
                        "update {:4}  reward/step {:+.4}  motor {:.3}  entropy {:.3}",
                        p.update, p.mean_reward, p.motor_rate, p.entropy
                    );
                }
            })?;
            println!("wrote {} and {}", report.checkpoint.display(), report.curve_csv.display());
        }
        Command::Eval(args) => {
            let cfg = args.common.config()?;
            let pairs: Vec<_> = args.policies.iter().map(|c| (c.clone(), nav_for(c))).collect();
            let report = eval(&cfg, &pairs, &args.goal_counts)?;
            print!("{}", report.table);
        }
        Command::Explore(args) => {
            let cfg = args.common.config()?;
            let stats = explore(&cfg, &args.cameras, args.scenes)?;
            for s in &stats {
                println!(
                    "{:<12} area {:.2} ± {:.2} m²  find-all {:.2}  motor {:.3}",
                    s.method, s.final_area.mean, s.final_area.std, s.find_all_rate, s.motor_rate
                );
            }
        }
        Command::Gen(args) => {
            if !(1..=3).contains(&args.n_goals) {
                return Err(Error::InvalidConfig(format!("n_goals must be 1, 2 or 3, got {}", args.n_goals)));
            }
            let out = match std::env::var_os(OUTPUT_ENV) {
                Some(v) if !v.is_empty() => PathBuf::from(v),
                _ => args.out.clone(),
            };
            for p in generate_files(args.kind, args.size, args.seed, args.n_goals, args.episodes, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Render(args) => {
            let mut cfg = args.common.config()?;
            if let Some(s) = args.stride {
                cfg.render_stride = s;
            }
            if cfg.render_stride == 0 {
                return Err(Error::InvalidConfig("render stride must be at least 1".into()));
            }
            let seed = args.seed.unwrap_or(cfg.seeds[0]);
            let policy = ResolvedPolicy::resolve(&cfg.camera, &cfg.nav)?;
            let scene = cfg.scene.load()?;
            let spec = cfg.episode_for(&scene, cfg.n_goals, seed)?;
            let ep_cfg = EpisodeConfig { snapshot_stride: Some(cfg.render_stride), ..cfg.episode_config() };
            let out = run_episode(&scene, &spec, &ep_cfg, &mut policy.instantiate(seed, cfg.action_mode()))?;
            let dir = cfg.resolved_output_dir().join("frames");
            let frames = render_frames(&scene, &spec, &out, &ep_cfg, &dir)?;
            println!("wrote {} frames to {}", frames.len(), dir.display());
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::Parse { .. } => 2,
                _ => 1,
            }
        }
    }
}
