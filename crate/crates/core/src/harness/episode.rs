//! The per-step loop: decide → act → sense → map → reward.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate::EpisodeSpec;
use crate::active_cam::{
    camera_fixed, camera_heuristic_follow, camera_random, camera_swing, heuristic_direction, HeuristicConfig,
    HeuristicResult, SwingPhase,
};
use crate::frontier_nav::{nav_policy_step, NavConfig};
use crate::mapping::{build_local_map, update_object_map, GlobalMap, ObjectMap, Pose, DEFAULT_MARGIN_CELLS, FOOTPRINT_RADIUS, OCCUPIED};
use crate::metrics::{oracle_legs, EpisodeResult};
use crate::neural::{build_features, select_action, ActionMode, FeatureSpec, PolicyParams};
use crate::reward::{explored_area, reward_step, RewardBreakdown, RewardConfig, RewardState};
use crate::world::{
    angular_distance, first_blocked_cell, raycast, step, AgentState, CameraAction, NavAction, Scene, SensorConfig,
    FORWARD_METERS,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub budget: u32,
    pub sensor: SensorConfig,
    pub heuristic: HeuristicConfig,
    pub reward: RewardConfig,
    pub nav: NavConfig,
    /// Exploration protocol: goals are only sighted, never sought, and the
    /// episode runs to the budget.
    pub explore: bool,
    /// Keep a map snapshot every this many steps (for rendering).
    pub snapshot_stride: Option<u32>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            budget: 500,
            sensor: SensorConfig::default(),
            heuristic: HeuristicConfig::default(),
            reward: RewardConfig::default(),
            nav: NavConfig::default(),
            explore: false,
            snapshot_stride: None,
        }
    }
}

/// A recurrent network plus the state it carries between steps.
#[derive(Debug, Clone)]
pub struct NeuralAgent {
    pub params: Arc<PolicyParams>,
    pub spec: FeatureSpec,
    pub hidden: Vec<f64>,
    pub rng: ChaCha8Rng,
    pub mode: ActionMode,
    pub prev_cam: CameraAction,
}

impl NeuralAgent {
    pub fn new(params: Arc<PolicyParams>, spec: FeatureSpec, seed: u64, mode: ActionMode) -> Self {
        let hidden = params.zero_hidden();
        Self { params, spec, hidden, rng: ChaCha8Rng::seed_from_u64(seed), mode, prev_cam: CameraAction::Keep }
    }

    /// One forward pass; returns the chosen index of every head.
    fn act(&mut self, global: &GlobalMap, state: &AgentState, heur: &HeuristicResult, nav: Option<NavAction>) -> Result<Vec<usize>> {
        let x = build_features(&self.spec, global, state, heur.index(), nav, self.prev_cam);
        let out = self.params.forward(&x, &self.hidden)?;
        self.hidden = out.hidden;
        Ok(out.logits.iter().map(|l| select_action(l, self.mode, &mut self.rng)).collect())
    }
}

#[derive(Debug, Clone)]
pub enum CameraController {
    Fixed,
    Random(ChaCha8Rng),
    Swing(SwingPhase),
    Heuristic,
    Learned(NeuralAgent),
}

impl CameraController {
    pub fn act(&mut self, global: &GlobalMap, state: &AgentState, heur: &HeuristicResult, nav: NavAction) -> Result<CameraAction> {
        Ok(match self {
            Self::Fixed => camera_fixed(state, nav),
            Self::Random(rng) => camera_random(rng),
            Self::Swing(phase) => {
                let (a, next) = camera_swing(state, nav, *phase);
                *phase = next;
                a
            }
            Self::Heuristic => camera_heuristic_follow(heur, state),
            Self::Learned(agent) => {
                let a = agent.act(global, state, heur, Some(nav))?;
                let cam = CameraAction::from_index(a[0]).unwrap_or_default();
                agent.prev_cam = cam;
                cam
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum Policy {
    /// Frontier-based navigation with a separate camera policy.
    Modular(CameraController),
    /// One network choosing both actions (navigation head first).
    Joint(NeuralAgent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u32,
    /// Pose before the action.
    pub x: f64,
    pub y: f64,
    pub body_heading: i32,
    pub camera_offset: i32,
    pub nav: NavAction,
    pub cam: CameraAction,
    pub motor_actuated: bool,
    pub collided: bool,
    pub heuristic_index: Option<usize>,
    /// Relative to the body heading before the action, degrees.
    pub theta_star: f64,
    pub theta_star_world: f64,
    /// Camera heading after the action, degrees.
    pub camera_after: i32,
    /// Angle between `camera_after` and `theta_star_world`.
    pub s: f64,
    pub reward: RewardBreakdown,
    /// Explored area after this step's observation, m².
    pub explored_area: f64,
    pub goals_reached: Vec<usize>,
    pub goals_sighted: Vec<usize>,
}

/// Owns one episode's world and maps and advances it step by step.
#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    scene: Scene,
    spec: EpisodeSpec,
    cfg: EpisodeConfig,
    state: AgentState,
    global: GlobalMap,
    objmap: ObjectMap,
    reward_state: Option<RewardState>,
    path_len: f64,
    reached: Vec<(u32, f64)>,
    sighted_all_at: Option<(u32, f64)>,
    last_sighting_len: f64,
    curve: Vec<(u32, f64)>,
    records: Vec<TrajectoryRecord>,
    snapshots: Vec<(u32, GlobalMap)>,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutput {
    pub result: EpisodeResult,
    pub records: Vec<TrajectoryRecord>,
    pub snapshots: Vec<(u32, GlobalMap)>,
    pub final_map: GlobalMap,
}

impl EpisodeRunner {
    /// Places the agent and registers its first observation.
    pub fn new(scene: &Scene, spec: &EpisodeSpec, cfg: &EpisodeConfig) -> Result<Self> {
        let scene = scene.with_goals(spec.goals.clone());
        scene.validate()?;
        let mut runner = Self {
            state: AgentState::new(spec.start, spec.start_heading),
            global: GlobalMap::for_scene(&scene, DEFAULT_MARGIN_CELLS),
            objmap: ObjectMap::default(),
            scene,
            spec: spec.clone(),
            cfg: *cfg,
            reward_state: None,
            path_len: 0.0,
            reached: Vec::new(),
            sighted_all_at: None,
            last_sighting_len: 0.0,
            curve: Vec::new(),
            records: Vec::new(),
            snapshots: Vec::new(),
        };
        let seen = runner.observe()?;
        runner.note_sightings(&seen);
        runner.curve.push((0, runner.global.explored_area()));
        Ok(runner)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn global(&self) -> &GlobalMap {
        &self.global
    }

    pub fn objmap(&self) -> &ObjectMap {
        &self.objmap
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn steps(&self) -> u32 {
        self.state.step
    }

    fn n_goals(&self) -> usize {
        self.scene.goals().len()
    }

    fn found(&self) -> usize {
        if self.cfg.explore {
            self.objmap.len()
        } else {
            self.state.current_goal_index.min(self.n_goals())
        }
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.cfg.budget || (!self.cfg.explore && self.found() == self.n_goals())
    }

    fn observe(&mut self) -> Result<Vec<usize>> {
        let s = &self.cfg.sensor;
        let camera = self.state.camera_heading().as_f64();
        let scan = raycast(&self.scene, self.state.position, camera, s.fov_deg, s.range, s.n_rays);
        let local = build_local_map(&scan);
        self.global.register(&local, Pose::new(self.state.position, camera))?;
        self.global.mark_footprint(self.state.position, FOOTPRINT_RADIUS);
        Ok(update_object_map(&mut self.objmap, &self.scene, &self.state, s))
    }

    fn note_sightings(&mut self, added: &[usize]) {
        if !added.is_empty() {
            self.last_sighting_len = self.path_len;
        }
        if self.sighted_all_at.is_none() && self.objmap.len() == self.n_goals() {
            self.sighted_all_at = Some((self.state.step, self.path_len));
        }
    }

    pub fn heuristic(&self) -> HeuristicResult {
        heuristic_direction(&self.global, &self.state, &self.cfg.heuristic)
    }

    /// Frontier-based navigation action for the current state.
    pub fn fbe_action(&self) -> NavAction {
        let nav_cfg = NavConfig { seek_goals: !self.cfg.explore, ..self.cfg.nav };
        nav_policy_step(&self.global, &self.objmap, &self.state, &nav_cfg)
    }

    /// Decides with `policy` and executes one step.
    pub fn step(&mut self, policy: &mut Policy) -> Result<&TrajectoryRecord> {
        let heur = self.heuristic();
        let (nav, cam) = match policy {
            Policy::Modular(camera) => {
                let nav = self.fbe_action();
                let cam = camera.act(&self.global, &self.state, &heur, nav)?;
                (nav, cam)
            }
            Policy::Joint(agent) => {
                let a = agent.act(&self.global, &self.state, &heur, None)?;
                let nav = NavAction::from_index(a[0]).unwrap_or(NavAction::TurnLeft);
                let cam = CameraAction::from_index(a[1]).unwrap_or_default();
                agent.prev_cam = cam;
                (nav, cam)
            }
        };
        self.execute(nav, cam, &heur)
    }

    /// Executes externally chosen actions. `heur` must be this step's
    /// heuristic result (computed on the current map before acting).
    pub fn execute(&mut self, nav: NavAction, cam: CameraAction, heur: &HeuristicResult) -> Result<&TrajectoryRecord> {
        if let Some(stride) = self.cfg.snapshot_stride {
            if stride > 0 && self.state.step.is_multiple_of(stride) {
                self.snapshots.push((self.state.step, self.global.clone()));
            }
        }
        let before = self.state;
        let theta_world = heur.world_theta(before.body_heading.as_f64());
        let rstate = match self.reward_state {
            Some(r) => r,
            None => RewardState::new(angular_distance(before.camera_heading().as_f64(), theta_world), self.global.explored_cells()),
        };

        let out = step(&self.scene, &before, nav, cam);
        if out.collided {
            let target = before.position.advance(before.body_heading.as_f64(), FORWARD_METERS);
            if let Some(cell) = first_blocked_cell(&self.scene, before.position, target) {
                let g = self.global.cell_of(self.scene.cell_center(cell));
                self.global.raise(g, OCCUPIED);
            }
        } else if nav == NavAction::Forward {
            self.path_len += FORWARD_METERS;
        }
        self.state = out.new_state;
        let mut goals_reached = Vec::new();
        if out.goal_advanced {
            goals_reached.push(before.current_goal_index);
            self.reached.push((self.state.step, self.path_len));
        }
        let goals_sighted = self.observe()?;
        self.note_sightings(&goals_sighted);

        let s_now = angular_distance(self.state.camera_heading().as_f64(), theta_world);
        let area = explored_area(self.global.explored_cells());
        let (reward, next) = reward_step(&rstate, s_now, area, out.motor_actuated, &self.cfg.reward)?;
        self.reward_state = Some(next);
        self.curve.push((self.state.step, area));

        self.records.push(TrajectoryRecord {
            step: before.step,
            x: before.position.x,
            y: before.position.y,
            body_heading: before.body_heading.degrees(),
            camera_offset: before.camera_offset.degrees(),
            nav,
            cam,
            motor_actuated: out.motor_actuated,
            collided: out.collided,
            heuristic_index: heur.chosen,
            theta_star: heur.theta_star,
            theta_star_world: theta_world,
            camera_after: self.state.camera_heading().degrees(),
            s: s_now,
            reward,
            explored_area: area,
            goals_reached,
            goals_sighted,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn finish(self) -> EpisodeOutput {
        let n = self.n_goals();
        let found = self.found();
        let legs = oracle_legs(&self.scene, self.spec.start, self.scene.goals());
        let last_found = if self.cfg.explore {
            self.last_sighting_len
        } else {
            found.checked_sub(1).map_or(0.0, |i| self.reached[i].1)
        };
        let found_all_step = if self.cfg.explore {
            self.sighted_all_at.map(|p| p.0)
        } else if found == n {
            Some(self.reached.last().map_or(0, |p| p.0))
        } else {
            None
        };
        let result = EpisodeResult {
            success: found == n,
            progress: if n == 0 { 1.0 } else { found as f64 / n as f64 },
            n_goals: n,
            goals_found: found,
            agent_path_len: self.path_len,
            oracle_len: legs.iter().sum(),
            found_prefix_oracle_len: legs[..found].iter().sum(),
            agent_len_to_last_found: last_found,
            steps: self.state.step,
            explored_area_curve: self.curve,
            found_all_step,
        };
        EpisodeOutput { result, records: self.records, snapshots: self.snapshots, final_map: self.global }
    }
}

/// Runs `policy` on one episode until all goals are found or the budget is
/// spent.
pub fn run_episode(scene: &Scene, spec: &EpisodeSpec, cfg: &EpisodeConfig, policy: &mut Policy) -> Result<EpisodeOutput> {
    let mut runner = EpisodeRunner::new(scene, spec, cfg)?;
    while !runner.is_done() {
        runner.step(policy)?;
    }
    Ok(runner.finish())
}
