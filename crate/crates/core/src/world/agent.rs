use serde::{Deserialize, Serialize};

use super::raycast::first_blocked_cell;
use super::{Heading, Point, Scene, FORWARD_METERS, TURN_DEGREES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NavAction {
    Forward,
    TurnLeft,
    TurnRight,
    Found,
}

impl NavAction {
    pub const ALL: [NavAction; 4] = [NavAction::Forward, NavAction::TurnLeft, NavAction::TurnRight, NavAction::Found];

    /// Body rotation requested by this action, degrees.
    pub fn rotation(self) -> i32 {
        match self {
            NavAction::TurnLeft => TURN_DEGREES,
            NavAction::TurnRight => -TURN_DEGREES,
            NavAction::Forward | NavAction::Found => 0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Camera actions are deltas of the absolute (world-frame) camera heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CameraAction {
    TurnCameraLeft,
    TurnCameraRight,
    #[default]
    Keep,
}

impl CameraAction {
    pub const ALL: [CameraAction; 3] = [CameraAction::TurnCameraLeft, CameraAction::TurnCameraRight, CameraAction::Keep];

    pub fn delta(self) -> i32 {
        match self {
            CameraAction::TurnCameraLeft => TURN_DEGREES,
            CameraAction::TurnCameraRight => -TURN_DEGREES,
            CameraAction::Keep => 0,
        }
    }

    pub fn from_delta(delta: i32) -> Option<Self> {
        match delta {
            TURN_DEGREES => Some(CameraAction::TurnCameraLeft),
            d if d == -TURN_DEGREES => Some(CameraAction::TurnCameraRight),
            0 => Some(CameraAction::Keep),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point,
    pub body_heading: Heading,
    /// Camera heading minus body heading.
    pub camera_offset: Heading,
    pub step: u32,
    pub current_goal_index: usize,
}

impl AgentState {
    pub fn new(position: Point, body_heading: Heading) -> Self {
        Self { position, body_heading, camera_offset: Heading::ZERO, step: 0, current_goal_index: 0 }
    }

    pub fn camera_heading(&self) -> Heading {
        self.body_heading + self.camera_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub new_state: AgentState,
    pub collided: bool,
    pub motor_actuated: bool,
    pub goal_advanced: bool,
}

/// True when the agent is within the goal radius of its current goal.
pub fn auto_found_check(scene: &Scene, state: &AgentState) -> bool {
    scene
        .goals()
        .get(state.current_goal_index)
        .is_some_and(|g| state.position.distance(*g) <= scene.goal_radius())
}

/// Executes one joint (navigation, camera) action.
///
/// The camera motor runs only when the requested absolute camera rotation
/// differs from the body rotation; a same-direction pair is carried by the
/// wheels alone. A blocked forward move leaves the agent in place.
pub fn step(scene: &Scene, state: &AgentState, nav: NavAction, cam: CameraAction) -> StepOutcome {
    let mut next = *state;
    let mut collided = false;
    let mut body_delta = 0;

    match nav {
        NavAction::Forward => {
            let target = state.position.advance(state.body_heading.as_f64(), FORWARD_METERS);
            if first_blocked_cell(scene, state.position, target).is_some() {
                collided = true;
            } else {
                next.position = target;
            }
        }
        NavAction::TurnLeft | NavAction::TurnRight => {
            body_delta = nav.rotation();
            next.body_heading = state.body_heading.rotate(body_delta);
        }
        NavAction::Found => {}
    }

    let camera = state.camera_heading().rotate(cam.delta());
    next.camera_offset = camera - next.body_heading;
    let motor_actuated = cam.delta() != body_delta;

    next.step = state.step + 1;
    let goal_advanced = auto_found_check(scene, &next);
    if goal_advanced {
        next.current_goal_index += 1;
    }

    StepOutcome { new_state: next, collided, motor_actuated, goal_advanced }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Terrain;
    use crate::Grid;

    fn open_scene() -> Scene {
        let (w, h) = (80, 80);
        let grid = Grid::from_fn(w, h, |c| {
            if c.row == 0 || c.col == 0 || c.row as usize == h - 1 || c.col as usize == w - 1 {
                Terrain::Occupied
            } else {
                Terrain::Free
            }
        });
        Scene::new(grid, vec![Point::new(5.5, 5.5)])
    }

    #[test]
    fn turn_left_with_camera_left_needs_no_motor() {
        let scene = open_scene();
        let s = AgentState::new(Point::new(2.0, 2.0), Heading::new(0));
        let out = step(&scene, &s, NavAction::TurnLeft, CameraAction::TurnCameraLeft);
        assert_eq!(out.new_state.body_heading.degrees(), 30);
        assert_eq!(out.new_state.camera_heading().degrees(), 30);
        assert_eq!(out.new_state.camera_offset.degrees(), 0);
        assert!(!out.motor_actuated);
    }

    #[test]
    fn forward_keep_advances() {
        let scene = open_scene();
        let s = AgentState::new(Point::new(2.0, 2.0), Heading::new(90));
        let out = step(&scene, &s, NavAction::Forward, CameraAction::Keep);
        assert!((out.new_state.position.y - 2.25).abs() < 1e-12);
        assert!((out.new_state.position.x - 2.0).abs() < 1e-12);
        assert_eq!(out.new_state.camera_offset.degrees(), 0);
        assert!(!out.motor_actuated && !out.collided);
    }

    #[test]
    fn turn_left_keep_counter_rotates_offset() {
        let scene = open_scene();
        let s = AgentState::new(Point::new(2.0, 2.0), Heading::new(0));
        let out = step(&scene, &s, NavAction::TurnLeft, CameraAction::Keep);
        assert_eq!(out.new_state.body_heading.degrees(), 30);
        assert_eq!(out.new_state.camera_heading().degrees(), 0);
        assert_eq!(out.new_state.camera_offset.signed(), -30);
        assert!(out.motor_actuated);
    }

    #[test]
    fn blocked_forward_is_noop() {
        let scene = open_scene();
        let s = AgentState::new(Point::new(0.2, 2.0), Heading::new(180));
        let out = step(&scene, &s, NavAction::Forward, CameraAction::Keep);
        assert!(out.collided);
        assert_eq!(out.new_state.position, s.position);
        assert_eq!(out.new_state.step, 1);
    }

    #[test]
    fn auto_found_radius() {
        let scene = open_scene();
        let goal = scene.goals()[0];
        let at = |d: f64| AgentState::new(Point::new(goal.x - d, goal.y), Heading::ZERO);
        assert!(auto_found_check(&scene, &at(1.49)));
        assert!(auto_found_check(&scene, &at(0.0)));
        assert!(auto_found_check(&scene, &at(1.5)));
        assert!(!auto_found_check(&scene, &at(1.51)));
    }

    #[test]
    fn found_away_from_goal_is_noop() {
        let scene = open_scene();
        let s = AgentState::new(Point::new(1.0, 1.0), Heading::ZERO);
        let out = step(&scene, &s, NavAction::Found, CameraAction::Keep);
        assert!(!out.goal_advanced);
        assert_eq!(out.new_state.current_goal_index, 0);
        assert_eq!(out.new_state.position, s.position);
    }
}
