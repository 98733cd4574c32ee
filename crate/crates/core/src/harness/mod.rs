//! Scene generation, episode execution, training environments, experiment
//! drivers, rendering and the CLI.

pub mod cli;
pub mod config;
pub mod envs;
pub mod episode;
pub mod experiments;
pub mod generate;
pub mod render;

pub use config::{demo_episode, demo_scene, CameraPolicyKind, NavPolicyKind, ResolvedPolicy, RunConfig, SceneSource, TrainEnvKind};
pub use envs::{scene_pool, AlignmentConfig, AlignmentEnv, CameraEnv, CameraEnvConfig, JointEnv, JointEnvConfig};
pub use episode::{run_episode, CameraController, EpisodeConfig, EpisodeOutput, EpisodeRunner, NeuralAgent, Policy, TrajectoryRecord};
pub use experiments::{eval, explore, explore_jobs, explore_protocol, run, train_policy, ExploreJob, ExploreStats, MetricsRow};
pub use generate::{default_gap_limits, generate_episode, generate_scene, EpisodeSpec, SceneKind};
pub use render::{render_frame, render_frames};
