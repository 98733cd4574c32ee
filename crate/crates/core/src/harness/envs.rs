//! Training environments for the camera and joint policies.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{EpisodeConfig, EpisodeRunner};
use super::generate::{default_gap_limits, generate_episode, generate_scene, SceneKind};
use crate::active_cam::{camera_heuristic_follow, heuristic_direction, HeuristicConfig, HeuristicResult};
use crate::mapping::{build_local_map, GlobalMap, Pose, DEFAULT_MARGIN_CELLS, FOOTPRINT_RADIUS};
use crate::neural::{build_features, EnvStep, FeatureSpec, TrainEnv};
use crate::planning::{distance_field, NavGrid};
use crate::world::{angular_distance, raycast, step, AgentState, CameraAction, Heading, NavAction, Scene, SensorConfig, TURN_DEGREES};
use crate::{Cell, Grid, Result};

/// Generates `count` scenes of alternating kinds for a training pool.
pub fn scene_pool(count: usize, size_m: f64, seed: u64) -> Result<Arc<Vec<Scene>>> {
    let kinds = [SceneKind::Rooms, SceneKind::Maze, SceneKind::Corridors];
    let scenes = (0..count)
        .map(|i| generate_scene(kinds[i % kinds.len()], size_m, seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(scenes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub episode_len: u32,
    pub alpha: f64,
    /// Observations fused into the frozen map at reset.
    pub reset_scans: usize,
    /// Chance that the sampled pending navigation action is a forward move.
    /// Body turns shift the target heading by a full turn step, so frequent
    /// turns drown the small per-step alignment credit in noise.
    pub forward_prob: f64,
    pub heuristic: HeuristicConfig,
    pub sensor: SensorConfig,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self { episode_len: 32, alpha: 10.0, reset_scans: 2, forward_prob: 0.9, heuristic: HeuristicConfig::default(), sensor: SensorConfig::default() }
    }
}

/// Toy task on a frozen, partially explored map: the body wanders at random
/// and the camera is paid `α·(s_prev − s_now)` for turning towards `θ*`.
///
/// The navigation sequence depends only on the environment seed, so every
/// camera policy faces the same episodes.
#[derive(Debug, Clone)]
pub struct AlignmentEnv {
    scenes: Arc<Vec<Scene>>,
    cfg: AlignmentConfig,
    spec: FeatureSpec,
    rng: ChaCha8Rng,
    scene: usize,
    global: GlobalMap,
    state: AgentState,
    t: u32,
    s_prev: Option<f64>,
    prev_cam: CameraAction,
    pending: Option<(NavAction, HeuristicResult)>,
}

impl AlignmentEnv {
    pub fn new(scenes: Arc<Vec<Scene>>, cfg: AlignmentConfig, seed: u64) -> Self {
        let global = GlobalMap::for_scene(&scenes[0], DEFAULT_MARGIN_CELLS);
        let mut env = Self {
            scenes,
            cfg,
            spec: FeatureSpec::camera(cfg.heuristic.k),
            rng: ChaCha8Rng::seed_from_u64(seed),
            scene: 0,
            global,
            state: AgentState::new(Default::default(), Heading::ZERO),
            t: 0,
            s_prev: None,
            prev_cam: CameraAction::Keep,
            pending: None,
        };
        env.reset();
        env
    }

    fn reset(&mut self) {
        self.scene = self.rng.gen_range(0..self.scenes.len());
        let scene = &self.scenes[self.scene];
        let free: Vec<Cell> = scene.grid().cells().filter(|&c| (-2..=2).all(|d| (-2..=2).all(|e| !scene.is_occupied(c.offset(d, e))))).collect();
        let start = *free.choose(&mut self.rng).expect("scene has open space");
        let heading = Heading::new(TURN_DEGREES * self.rng.gen_range(0..12));
        self.state = AgentState::new(scene.cell_center(start), heading);
        self.global = GlobalMap::for_scene(scene, DEFAULT_MARGIN_CELLS);
        for _ in 0..self.cfg.reset_scans {
            let look = TURN_DEGREES * self.rng.gen_range(0..12);
            let s = &self.cfg.sensor;
            let scan = raycast(scene, self.state.position, look as f64, s.fov_deg, s.range, s.n_rays);
            self.global
                .register(&build_local_map(&scan), Pose::new(self.state.position, look as f64))
                .expect("scene margin holds any scan");
        }
        self.global.mark_footprint(self.state.position, FOOTPRINT_RADIUS);
        self.state.camera_offset = Heading::new(TURN_DEGREES * self.rng.gen_range(0..12));
        self.t = 0;
        self.s_prev = None;
        self.prev_cam = CameraAction::Keep;
        self.pending = None;
    }

    fn pending(&mut self) -> (NavAction, HeuristicResult) {
        if self.pending.is_none() {
            let u: f64 = self.rng.gen();
            let nav = if u < self.cfg.forward_prob {
                NavAction::Forward
            } else if u < (1.0 + self.cfg.forward_prob) / 2.0 {
                NavAction::TurnLeft
            } else {
                NavAction::TurnRight
            };
            let heur = heuristic_direction(&self.global, &self.state, &self.cfg.heuristic);
            self.pending = Some((nav, heur));
        }
        self.pending.clone().expect("just filled")
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    /// Action heuristic-follow would take now.
    pub fn heuristic_follow_action(&mut self) -> usize {
        let (_, heur) = self.pending();
        camera_heuristic_follow(&heur, &self.state).index()
    }
}

impl TrainEnv for AlignmentEnv {
    fn feature_dim(&self) -> usize {
        self.spec.dim()
    }

    fn heads(&self) -> Vec<usize> {
        vec![CameraAction::ALL.len()]
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        let (nav, heur) = self.pending();
        Ok(build_features(&self.spec, &self.global, &self.state, heur.index(), Some(nav), self.prev_cam))
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let (nav, heur) = self.pending();
        self.pending = None;
        let cam = CameraAction::from_index(actions[0]).unwrap_or_default();
        let theta = heur.world_theta(self.state.body_heading.as_f64());
        let s_prev = self.s_prev.unwrap_or_else(|| angular_distance(self.state.camera_heading().as_f64(), theta));
        let out = step(&self.scenes[self.scene], &self.state, nav, cam);
        self.state = out.new_state;
        let s_now = angular_distance(self.state.camera_heading().as_f64(), theta);
        self.s_prev = Some(s_now);
        self.prev_cam = cam;
        self.t += 1;
        let reward = self.cfg.alpha * (s_prev - s_now);
        let done = self.t >= self.cfg.episode_len;
        if done {
            self.reset();
        }
        Ok(EnvStep { reward, done, motor_actuated: out.motor_actuated })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraEnvConfig {
    pub episode: EpisodeConfig,
    pub n_goals: usize,
}

impl Default for CameraEnvConfig {
    fn default() -> Self {
        Self { episode: EpisodeConfig { budget: 64, explore: true, ..Default::default() }, n_goals: 0 }
    }
}

/// The full pipeline with frontier navigation; the network picks the camera
/// action and is paid the exploration reward.
#[derive(Debug, Clone)]
pub struct CameraEnv {
    scenes: Arc<Vec<Scene>>,
    cfg: CameraEnvConfig,
    spec: FeatureSpec,
    rng: ChaCha8Rng,
    runner: EpisodeRunner,
    prev_cam: CameraAction,
    pending: Option<(NavAction, HeuristicResult)>,
}

fn new_runner(scenes: &[Scene], rng: &mut ChaCha8Rng, episode: &EpisodeConfig, n_goals: usize) -> Result<EpisodeRunner> {
    let idx = rng.gen_range(0..scenes.len());
    let scene = &scenes[idx];
    let (d_min, d_max) = default_gap_limits(scene);
    let spec = generate_episode(scene, &format!("pool-{idx}"), n_goals, d_min, d_max, rng.gen())?;
    EpisodeRunner::new(scene, &spec, episode)
}

impl CameraEnv {
    pub fn new(scenes: Arc<Vec<Scene>>, cfg: CameraEnvConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let runner = new_runner(&scenes, &mut rng, &cfg.episode, cfg.n_goals)?;
        Ok(Self { spec: FeatureSpec::camera(cfg.episode.heuristic.k), scenes, cfg, rng, runner, prev_cam: CameraAction::Keep, pending: None })
    }

    pub fn runner(&self) -> &EpisodeRunner {
        &self.runner
    }

    fn pending(&mut self) -> (NavAction, HeuristicResult) {
        if self.pending.is_none() {
            self.pending = Some((self.runner.fbe_action(), self.runner.heuristic()));
        }
        self.pending.clone().expect("just filled")
    }
}

impl TrainEnv for CameraEnv {
    fn feature_dim(&self) -> usize {
        self.spec.dim()
    }

    fn heads(&self) -> Vec<usize> {
        vec![CameraAction::ALL.len()]
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        let (nav, heur) = self.pending();
        Ok(build_features(&self.spec, self.runner.global(), self.runner.state(), heur.index(), Some(nav), self.prev_cam))
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let (nav, heur) = self.pending();
        self.pending = None;
        let cam = CameraAction::from_index(actions[0]).unwrap_or_default();
        let rec = self.runner.execute(nav, cam, &heur)?;
        let st = EnvStep { reward: rec.reward.total, done: false, motor_actuated: rec.motor_actuated };
        self.prev_cam = cam;
        if self.runner.is_done() {
            self.runner = new_runner(&self.scenes, &mut self.rng, &self.cfg.episode, self.cfg.n_goals)?;
            self.prev_cam = CameraAction::Keep;
            return Ok(EnvStep { done: true, ..st });
        }
        Ok(st)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointEnvConfig {
    pub episode: EpisodeConfig,
    pub n_goals: usize,
    /// Reward per meter of geodesic progress towards the current goal.
    pub progress_weight: f64,
    pub goal_bonus: f64,
}

impl Default for JointEnvConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig { budget: 128, ..Default::default() },
            n_goals: 1,
            progress_weight: 100.0,
            goal_bonus: 250.0,
        }
    }
}

/// One network drives both the wheels and the camera. On top of the
/// exploration reward it is paid for geodesic progress to the current goal.
#[derive(Debug, Clone)]
pub struct JointEnv {
    scenes: Arc<Vec<Scene>>,
    cfg: JointEnvConfig,
    spec: FeatureSpec,
    rng: ChaCha8Rng,
    runner: EpisodeRunner,
    fields: Vec<Grid<f64>>,
    prev_cam: CameraAction,
    pending: Option<HeuristicResult>,
}

fn goal_fields(runner: &EpisodeRunner) -> Vec<Grid<f64>> {
    let scene = runner.scene();
    let grid = NavGrid::from_scene(scene);
    scene.goals().iter().map(|g| distance_field(&grid, scene.cell_of(*g))).collect()
}

impl JointEnv {
    pub fn new(scenes: Arc<Vec<Scene>>, cfg: JointEnvConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let runner = new_runner(&scenes, &mut rng, &cfg.episode, cfg.n_goals)?;
        let fields = goal_fields(&runner);
        Ok(Self { spec: FeatureSpec::joint(cfg.episode.heuristic.k), scenes, cfg, rng, runner, fields, prev_cam: CameraAction::Keep, pending: None })
    }

    fn goal_distance(&self) -> f64 {
        let st = self.runner.state();
        self.fields.get(st.current_goal_index).map_or(0.0, |f| {
            let d = f[self.runner.scene().cell_of(st.position)];
            if d.is_finite() { d } else { 0.0 }
        })
    }
}

impl TrainEnv for JointEnv {
    fn feature_dim(&self) -> usize {
        self.spec.dim()
    }

    fn heads(&self) -> Vec<usize> {
        vec![NavAction::ALL.len(), CameraAction::ALL.len()]
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        let heur = self.pending.get_or_insert_with(|| self.runner.heuristic()).index();
        Ok(build_features(&self.spec, self.runner.global(), self.runner.state(), heur, None, self.prev_cam))
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        let heur = match self.pending.take() {
            Some(h) => h,
            None => self.runner.heuristic(),
        };
        let nav = NavAction::from_index(actions[0]).unwrap_or(NavAction::TurnLeft);
        let cam = CameraAction::from_index(actions[1]).unwrap_or_default();
        let goal_before = self.runner.state().current_goal_index;
        let d_before = self.goal_distance();
        let rec = self.runner.execute(nav, cam, &heur)?;
        let (mut reward, motor) = (rec.reward.total, rec.motor_actuated);
        if self.runner.state().current_goal_index > goal_before {
            reward += self.cfg.goal_bonus;
        } else {
            reward += self.cfg.progress_weight * (d_before - self.goal_distance());
        }
        self.prev_cam = cam;
        if self.runner.is_done() {
            self.runner = new_runner(&self.scenes, &mut self.rng, &self.cfg.episode, self.cfg.n_goals)?;
            self.fields = goal_fields(&self.runner);
            self.prev_cam = CameraAction::Keep;
            return Ok(EnvStep { reward, done: true, motor_actuated: motor });
        }
        Ok(EnvStep { reward, done: false, motor_actuated: motor })
    }
}
