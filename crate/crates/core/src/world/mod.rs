//! Ground truth: scenes, agent kinematics and the planar depth sensor.

mod agent;
mod geometry;
mod raycast;
mod scene;

pub use agent::{auto_found_check, step, AgentState, CameraAction, NavAction, StepOutcome};
pub use geometry::{angular_distance, wrap_signed, Heading, Point};
pub use raycast::{first_blocked_cell, raycast, DepthScan, SensorConfig};
pub use scene::{Scene, Terrain};

/// Rotation applied by one turn action, in degrees.
pub const TURN_DEGREES: i32 = 30;

/// Translation applied by one forward action, in meters.
pub const FORWARD_METERS: f64 = 0.25;

/// Radius within which the current goal counts as found, in meters.
pub const GOAL_RADIUS: f64 = 1.5;

pub(crate) use raycast::traverse as raycast_traverse;
