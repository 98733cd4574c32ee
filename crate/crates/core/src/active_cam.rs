//! Where to look: the geodesic heuristic direction and the rule-based camera
//! policies (fixed, random, swing, heuristic-follow).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mapping::{GlobalMap, UNEXPLORED};
use crate::planning::{astar_bounded, make_navgrid, NavMode};
use crate::world::{angular_distance, wrap_signed, AgentState, CameraAction, NavAction, Point, TURN_DEGREES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    pub k: usize,
    /// Probe radius, meters.
    pub r: f64,
    /// Geodesic cut-off, meters.
    pub gamma: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { k: 8, r: 2.4, gamma: 2.88 }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("heuristic k must be at least 1".into()));
        }
        if !(self.r.is_finite() && self.gamma.is_finite() && self.r > 0.0 && self.gamma > self.r) {
            return Err(Error::InvalidConfig(format!("heuristic needs 0 < r < gamma, got r={} gamma={}", self.r, self.gamma)));
        }
        Ok(())
    }

    /// Probe angle `i` relative to the navigation direction, degrees.
    pub fn theta(&self, i: usize) -> f64 {
        360.0 * i as f64 / self.k as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub points: Vec<Point>,
    /// Geodesic distance per probe, meters. Distances at or beyond `gamma`
    /// are not resolved and read `+∞`.
    pub distances: Vec<f64>,
    pub explorable: Vec<usize>,
    /// Index of the chosen probe; `None` is the `θ* = 0` fallback.
    pub chosen: Option<usize>,
    /// Relative to the navigation direction, degrees.
    pub theta_star: f64,
}

impl HeuristicResult {
    /// Probe index used for the one-hot feature; the fallback maps to probe 0.
    pub fn index(&self) -> usize {
        self.chosen.unwrap_or(0)
    }

    /// `θ*` in the world frame given the body heading it was computed for.
    pub fn world_theta(&self, body_heading_deg: f64) -> f64 {
        (body_heading_deg + self.theta_star).rem_euclid(360.0)
    }
}

/// Argmin of angular distance between each candidate's world angle and the
/// camera heading. Equal distances go to the smaller counter-clockwise turn.
pub fn closest_direction(world_angles: &[f64], candidates: &[usize], camera_deg: f64) -> Option<usize> {
    let key = |i: usize| {
        let a = world_angles[i];
        (angular_distance(a, camera_deg), (a - camera_deg).rem_euclid(360.0))
    };
    candidates.iter().copied().min_by(|&a, &b| {
        let (da, la) = key(a);
        let (db, lb) = key(b);
        da.total_cmp(&db).then(la.total_cmp(&lb)).then(a.cmp(&b))
    })
}

/// Probes closer than `gamma` whose cell is still unexplored.
pub fn explorable_set(distances: &[f64], unexplored: &[bool], gamma: f64) -> Vec<usize> {
    (0..distances.len()).filter(|&i| unexplored[i] && distances[i] < gamma).collect()
}

pub fn heuristic_direction(global: &GlobalMap, state: &AgentState, cfg: &HeuristicConfig) -> HeuristicResult {
    let mut grid = make_navgrid(global, NavMode::Optimistic);
    let start = global.cell_of(state.position);
    grid.set_passable(start, true);
    let body = state.body_heading.as_f64();
    let mut points = Vec::with_capacity(cfg.k);
    let mut distances = Vec::with_capacity(cfg.k);
    let mut unexplored = Vec::with_capacity(cfg.k);
    let mut world_angles = Vec::with_capacity(cfg.k);
    for i in 0..cfg.k {
        let world = body + cfg.theta(i);
        let p = state.position.advance(world, cfg.r);
        let cell = global.cell_of(p);
        let d = astar_bounded(&grid, start, cell, cfg.gamma).distance;
        unexplored.push(global.grid().contains(cell) && global.value(cell) == UNEXPLORED);
        points.push(p);
        distances.push(d);
        world_angles.push(world);
    }
    let explorable = explorable_set(&distances, &unexplored, cfg.gamma);
    let chosen = closest_direction(&world_angles, &explorable, state.camera_heading().as_f64());
    let theta_star = chosen.map_or(0.0, |i| cfg.theta(i));
    HeuristicResult { points, distances, explorable, chosen, theta_star }
}

/// Camera locked to the body: drives the offset to zero, preferring the
/// action that leaves the motor idle.
pub fn camera_fixed(state: &AgentState, nav: NavAction) -> CameraAction {
    let offset = state.camera_offset.signed();
    let rot = nav.rotation();
    CameraAction::ALL
        .into_iter()
        .min_by_key(|a| (resulting_offset(offset, a.delta(), rot).abs(), a.delta() != rot))
        .expect("three actions")
}

fn resulting_offset(offset: i32, cam_delta: i32, body_delta: i32) -> i32 {
    let v = (offset + cam_delta - body_delta).rem_euclid(360);
    if v > 180 {
        v - 360
    } else {
        v
    }
}

pub fn camera_random<R: Rng + ?Sized>(rng: &mut R) -> CameraAction {
    CameraAction::ALL[rng.gen_range(0..CameraAction::ALL.len())]
}

/// Direction the swing oscillator is currently sweeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SwingPhase {
    #[default]
    Left,
    Right,
}

pub const SWING_LIMIT: i32 = 90;

/// Sweeps the camera offset over ±90° in 30° steps, reversing at the
/// extremes. Returns the action and the phase for the next step.
pub fn camera_swing(state: &AgentState, nav: NavAction, phase: SwingPhase) -> (CameraAction, SwingPhase) {
    let offset = state.camera_offset.signed();
    let mut phase = phase;
    if offset >= SWING_LIMIT {
        phase = SwingPhase::Right;
    } else if offset <= -SWING_LIMIT {
        phase = SwingPhase::Left;
    }
    let target = match phase {
        SwingPhase::Left => offset + TURN_DEGREES,
        SwingPhase::Right => offset - TURN_DEGREES,
    };
    let delta = (target - offset + nav.rotation()).clamp(-TURN_DEGREES, TURN_DEGREES);
    let action = CameraAction::from_delta(delta).expect("clamped to a valid delta");
    (action, phase)
}

/// One absolute 30° camera step towards the world-frame heuristic direction;
/// holds once within 15°. A target exactly behind turns left.
pub fn camera_heuristic_follow(heur: &HeuristicResult, state: &AgentState) -> CameraAction {
    let target = heur.world_theta(state.body_heading.as_f64());
    let err = wrap_signed(target - state.camera_heading().as_f64());
    if err.abs() <= TURN_DEGREES as f64 / 2.0 {
        CameraAction::Keep
    } else if err > 0.0 {
        CameraAction::TurnCameraLeft
    } else {
        CameraAction::TurnCameraRight
    }
}
