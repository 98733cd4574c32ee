//! Active-camera multi-object navigation in a planar occupancy world.
//!
//! The crate simulates an agent whose camera can rotate independently of its
//! body. Each step the agent senses with a planar depth raycaster, fuses the
//! scan into a global occupancy map, picks a navigation action with a
//! frontier-based explorer, and picks a camera action with either a rule-based
//! policy or a recurrent actor-critic trained with PPO.
//!
//! Module map:
//!
//! - [`world`]: ground-truth scenes, agent kinematics, raycasting.
//! - [`mapping`]: local/global/egocentric occupancy maps and the object map.
//! - [`planning`]: A* geodesics on navigation grids.
//! - [`frontier_nav`]: frontier detection and the deterministic navigation policy.
//! - [`active_cam`]: heuristic camera direction and rule-based camera policies.
//! - [`reward`]: the exploration reward and motor accounting.
//! - [`neural`]: features, recurrent actor-critic, GAE and PPO.
//! - [`metrics`]: Success, Progress, SPL, PPL and aggregation.
//! - [`harness`]: episode runner, generators, rendering and the CLI.

pub mod active_cam;
pub mod error;
pub mod frontier_nav;
pub mod grid;
pub mod harness;
pub mod mapping;
pub mod metrics;
pub mod neural;
pub mod planning;
pub mod reward;
pub mod world;

pub use error::{Error, Result};
pub use grid::{Cell, Grid};

/// Edge length of one raster cell in meters, shared by every map.
pub const RESOLUTION: f64 = 0.08;

/// Area of one raster cell in square meters.
pub const CELL_AREA: f64 = RESOLUTION * RESOLUTION;
