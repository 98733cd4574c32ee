//! Run configuration, read from TOML and overridable from the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::envs::{AlignmentConfig, CameraEnvConfig, JointEnvConfig};
use super::episode::{CameraController, EpisodeConfig, NeuralAgent, Policy};
use super::generate::{default_gap_limits, generate_episode, generate_scene, EpisodeSpec, SceneKind};
use crate::active_cam::{HeuristicConfig, SwingPhase};
use crate::frontier_nav::NavConfig;
use crate::neural::{ActionMode, Checkpoint, PPOConfig, PolicyKind, TrainConfig};
use crate::reward::RewardConfig;
use crate::world::{Heading, Point, Scene, SensorConfig};
use crate::{Error, Result};

const DEMO_SCENE: &str = include_str!("../../data/demo_scene.txt");

/// The bundled 12 m × 12 m four-room scene with three goals.
pub fn demo_scene() -> Scene {
    Scene::from_text(DEMO_SCENE).expect("bundled scene parses")
}

/// Fixed start in the upper-left room; the first `n_goals` scene goals.
pub fn demo_episode(n_goals: usize) -> EpisodeSpec {
    let scene = demo_scene();
    EpisodeSpec {
        scene_id: "demo".into(),
        start: Point::new(1.5, 10.0),
        start_heading: Heading::ZERO,
        goals: scene.goals().iter().take(n_goals).copied().collect(),
        seed: 0,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum SceneSource {
    #[default]
    Demo,
    File { path: PathBuf },
    Generated { kind: SceneKind, size_m: f64, seed: u64 },
}

impl SceneSource {
    pub fn load(&self) -> Result<Scene> {
        let scene = match self {
            Self::Demo => demo_scene(),
            Self::File { path } => Scene::load(path)?,
            Self::Generated { kind, size_m, seed } => generate_scene(*kind, *size_m, *seed)?,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn id(&self) -> String {
        match self {
            Self::Demo => "demo".into(),
            Self::File { path } => path.file_stem().map_or_else(|| "scene".into(), |s| s.to_string_lossy().into_owned()),
            Self::Generated { kind, size_m, seed } => format!("{kind}-{size_m}m-{seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CameraPolicyKind {
    Fixed,
    Random,
    Swing,
    Heuristic,
    Learned(PathBuf),
    Joint(PathBuf),
}

impl FromStr for CameraPolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fixed" => Self::Fixed,
            "random" => Self::Random,
            "swing" => Self::Swing,
            "heuristic" => Self::Heuristic,
            _ => match s.split_once(':') {
                Some(("learned", p)) if !p.is_empty() => Self::Learned(p.into()),
                Some(("joint", p)) if !p.is_empty() => Self::Joint(p.into()),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown camera policy `{s}` (fixed, random, swing, heuristic, learned:<ckpt>, joint:<ckpt>)"
                    )))
                }
            },
        })
    }
}

impl std::fmt::Display for CameraPolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fixed => f.write_str("fixed"),
            Self::Random => f.write_str("random"),
            Self::Swing => f.write_str("swing"),
            Self::Heuristic => f.write_str("heuristic"),
            Self::Learned(p) => write!(f, "learned:{}", p.display()),
            Self::Joint(p) => write!(f, "joint:{}", p.display()),
        }
    }
}

impl TryFrom<String> for CameraPolicyKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CameraPolicyKind> for String {
    fn from(k: CameraPolicyKind) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NavPolicyKind {
    Fbe,
    Joint(PathBuf),
}

impl FromStr for NavPolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "fbe" => Ok(Self::Fbe),
            Some(("joint", p)) if !p.is_empty() => Ok(Self::Joint(p.into())),
            _ => Err(Error::InvalidConfig(format!("unknown navigation policy `{s}` (fbe, joint:<ckpt>)"))),
        }
    }
}

impl std::fmt::Display for NavPolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Fbe => f.write_str("fbe"),
            Self::Joint(p) => write!(f, "joint:{}", p.display()),
        }
    }
}

impl TryFrom<String> for NavPolicyKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NavPolicyKind> for String {
    fn from(k: NavPolicyKind) -> String {
        k.to_string()
    }
}

/// A camera/navigation pairing with its checkpoint already loaded.
#[derive(Debug, Clone)]
pub enum ResolvedPolicy {
    Fixed,
    Random,
    Swing,
    Heuristic,
    Learned(Arc<Checkpoint>),
    Joint(Arc<Checkpoint>),
}

fn load_checkpoint(path: &Path, kind: PolicyKind) -> Result<Arc<Checkpoint>> {
    if !path.exists() {
        return Err(Error::InvalidConfig(format!("checkpoint {} does not exist", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    if ck.kind != kind {
        return Err(Error::InvalidConfig(format!("checkpoint {} holds a {:?} policy, expected {kind:?}", path.display(), ck.kind)));
    }
    Ok(Arc::new(ck))
}

impl ResolvedPolicy {
    /// Checks that the pairing is coherent and loads any checkpoint.
    pub fn resolve(camera: &CameraPolicyKind, nav: &NavPolicyKind) -> Result<Self> {
        match (camera, nav) {
            (CameraPolicyKind::Joint(a), NavPolicyKind::Joint(b)) if a == b => Ok(Self::Joint(load_checkpoint(a, PolicyKind::Joint)?)),
            (CameraPolicyKind::Joint(_), _) | (_, NavPolicyKind::Joint(_)) => {
                Err(Error::InvalidConfig("a joint policy must drive both camera and navigation from the same checkpoint".into()))
            }
            (CameraPolicyKind::Fixed, NavPolicyKind::Fbe) => Ok(Self::Fixed),
            (CameraPolicyKind::Random, NavPolicyKind::Fbe) => Ok(Self::Random),
            (CameraPolicyKind::Swing, NavPolicyKind::Fbe) => Ok(Self::Swing),
            (CameraPolicyKind::Heuristic, NavPolicyKind::Fbe) => Ok(Self::Heuristic),
            (CameraPolicyKind::Learned(p), NavPolicyKind::Fbe) => Ok(Self::Learned(load_checkpoint(p, PolicyKind::Camera)?)),
        }
    }

    /// A fresh controller whose randomness derives only from `seed`.
    pub fn instantiate(&self, seed: u64, mode: ActionMode) -> Policy {
        let rng_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
        match self {
            Self::Fixed => Policy::Modular(CameraController::Fixed),
            Self::Random => Policy::Modular(CameraController::Random(rand::SeedableRng::seed_from_u64(rng_seed))),
            Self::Swing => Policy::Modular(CameraController::Swing(SwingPhase::Left)),
            Self::Heuristic => Policy::Modular(CameraController::Heuristic),
            Self::Learned(ck) => Policy::Modular(CameraController::Learned(NeuralAgent::new(Arc::new(ck.params.clone()), ck.features, rng_seed, mode))),
            Self::Joint(ck) => Policy::Joint(NeuralAgent::new(Arc::new(ck.params.clone()), ck.features, rng_seed, mode)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainEnvKind {
    /// Frozen-map alignment toy task.
    Alignment,
    /// Full pipeline with frontier navigation and the exploration reward.
    Camera,
    /// One network for navigation and camera.
    Joint,
}

impl FromStr for TrainEnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alignment" => Ok(Self::Alignment),
            "camera" => Ok(Self::Camera),
            "joint" => Ok(Self::Joint),
            other => Err(Error::InvalidConfig(format!("unknown training environment `{other}` (alignment, camera, joint)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub env: TrainEnvKind,
    pub seed: u64,
    pub updates: usize,
    pub hidden: usize,
    pub reward_scale: f64,
    pub ppo: PPOConfig,
    /// Training scenes are generated, never the evaluation scene.
    pub pool_scenes: usize,
    pub pool_size_m: f64,
    pub pool_seed: u64,
    pub alignment: AlignmentConfig,
    pub camera_env: CameraEnvConfig,
    pub joint_env: JointEnvConfig,
    pub checkpoint: PathBuf,
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { ppo: self.ppo, updates: self.updates, hidden: self.hidden, reward_scale: self.reward_scale }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            env: TrainEnvKind::Camera,
            seed: 0,
            updates: TrainConfig::default().updates,
            hidden: TrainConfig::default().hidden,
            reward_scale: TrainConfig::default().reward_scale,
            ppo: PPOConfig::default(),
            pool_scenes: 6,
            pool_size_m: 10.0,
            pool_seed: 1000,
            alignment: AlignmentConfig::default(),
            camera_env: CameraEnvConfig::default(),
            joint_env: JointEnvConfig::default(),
            checkpoint: PathBuf::from("policy.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSource,
    /// Pins the episode instead of sampling one per seed.
    pub episode: Option<PathBuf>,
    pub n_goals: usize,
    pub budget: u32,
    pub camera: CameraPolicyKind,
    pub nav: NavPolicyKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Sample neural actions instead of taking the arg-max.
    pub stochastic: bool,
    /// Snapshot stride used by `render`.
    pub render_stride: u32,
    pub sensor: SensorConfig,
    pub heuristic: HeuristicConfig,
    pub reward: RewardConfig,
    pub frontier: NavConfig,
    pub train: TrainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneSource::Demo,
            episode: None,
            n_goals: 3,
            budget: 500,
            camera: CameraPolicyKind::Heuristic,
            nav: NavPolicyKind::Fbe,
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("out"),
            stochastic: false,
            render_stride: 10,
            sensor: SensorConfig::default(),
            heuristic: HeuristicConfig::default(),
            reward: RewardConfig::default(),
            frontier: NavConfig::default(),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Structural checks that do not touch the file system.
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be at least 1".into()));
        }
        if !(1..=3).contains(&self.n_goals) {
            return Err(Error::InvalidConfig(format!("n_goals must be 1, 2 or 3, got {}", self.n_goals)));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.sensor.n_rays == 0 || !(self.sensor.range > 0.0) || !(self.sensor.fov_deg > 0.0 && self.sensor.fov_deg < 360.0) {
            return Err(Error::InvalidConfig("sensor needs n_rays >= 1, range > 0 and 0 < fov < 360".into()));
        }
        self.heuristic.validate()?;
        self.reward.validate()?;
        self.train.ppo.validate()?;
        if self.train.hidden == 0 || !(self.train.reward_scale > 0.0 && self.train.reward_scale.is_finite()) {
            return Err(Error::InvalidConfig("train.hidden must be >= 1 and train.reward_scale positive".into()));
        }
        if self.train.pool_scenes == 0 {
            return Err(Error::InvalidConfig("train.pool_scenes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            budget: self.budget,
            sensor: self.sensor,
            heuristic: self.heuristic,
            reward: self.reward,
            nav: self.frontier,
            explore: false,
            snapshot_stride: None,
        }
    }

    pub fn action_mode(&self) -> ActionMode {
        if self.stochastic { ActionMode::Sample } else { ActionMode::Greedy }
    }

    /// The episode for `seed`: the pinned file, the demo's fixed start, or
    /// a fresh sample from the scene.
    pub fn episode_for(&self, scene: &Scene, n_goals: usize, seed: u64) -> Result<EpisodeSpec> {
        if let Some(path) = &self.episode {
            return EpisodeSpec::load(path);
        }
        if self.scene == SceneSource::Demo {
            return Ok(EpisodeSpec { seed, ..demo_episode(n_goals) });
        }
        let (d_min, d_max) = default_gap_limits(scene);
        generate_episode(scene, &self.scene.id(), n_goals, d_min, d_max, seed)
    }

    /// Output directory, with `ACTIVECAM_OUT` taking precedence.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}

/// Environment variable overriding the configured output directory.
pub const OUTPUT_ENV: &str = "ACTIVECAM_OUT";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_scene_is_valid_with_reachable_goals() {
        let scene = demo_scene();
        scene.validate().unwrap();
        assert_eq!(scene.goals().len(), 3);
        assert_eq!((scene.width(), scene.height()), (150, 150));
        let ep = demo_episode(3);
        assert!(scene.is_free_point(ep.start));
        for (i, leg) in crate::metrics::oracle_legs(&scene, ep.start, &ep.goals).iter().enumerate() {
            assert!(leg.is_finite() && *leg > 1.5, "leg {i}: {leg}");
        }
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg = RunConfig::from_toml(
            "budget = 50\ncamera = \"swing\"\nseeds = [3]\n[heuristic]\nk = 12\n[scene]\nsource = \"generated\"\nkind = \"maze\"\nsize_m = 6.0\nseed = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.budget, 50);
        assert_eq!(cfg.camera, CameraPolicyKind::Swing);
        assert_eq!(cfg.heuristic, HeuristicConfig { k: 12, ..HeuristicConfig::default() });
        assert_eq!(cfg.reward, RewardConfig::default());
        assert_eq!(cfg.scene, SceneSource::Generated { kind: SceneKind::Maze, size_m: 6.0, seed: 2 });
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("camera = \"sideways\"").is_err());
        assert!(RunConfig::from_toml("nav = \"joint:\"").is_err());
        for text in ["budget = 0", "n_goals = 4", "seeds = []", "[heuristic]\nr = 3.0"] {
            let cfg = RunConfig::from_toml(text).unwrap();
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn policy_kinds_round_trip_through_strings() {
        for s in ["fixed", "random", "swing", "heuristic", "learned:a/b.json", "joint:c.json"] {
            assert_eq!(s.parse::<CameraPolicyKind>().unwrap().to_string(), s);
        }
        for s in ["fbe", "joint:c.json"] {
            assert_eq!(s.parse::<NavPolicyKind>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn mismatched_or_missing_checkpoints_fail_resolution() {
        let joint = CameraPolicyKind::Joint("x.json".into());
        assert!(ResolvedPolicy::resolve(&joint, &NavPolicyKind::Fbe).is_err());
        assert!(ResolvedPolicy::resolve(&CameraPolicyKind::Heuristic, &NavPolicyKind::Joint("x.json".into())).is_err());
        let missing = ResolvedPolicy::resolve(&CameraPolicyKind::Learned("/nonexistent/ck.json".into()), &NavPolicyKind::Fbe);
        assert!(matches!(missing, Err(Error::InvalidConfig(_))));
    }
}
