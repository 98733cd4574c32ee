//! Occupancy mapping: scan → local map → global map, egocentric crops and
//! the goal-sighting object map.
//!
//! Every raster uses the same alphabet ([`UNEXPLORED`] < [`FREE`] <
//! [`OCCUPIED`]) and is fused with `max`, so a cell's value never decreases.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::world::{first_blocked_cell, AgentState, DepthScan, Point, Scene, SensorConfig};
use crate::{Cell, Error, Grid, Result, CELL_AREA, RESOLUTION};

pub const UNEXPLORED: u8 = 0;
pub const FREE: u8 = 1;
pub const OCCUPIED: u8 = 2;

pub const LOCAL_SIZE: usize = 61;
pub const EGO_SIZE: usize = 125;

/// Default global margin around the scene, in cells (a little over 1 m).
pub const DEFAULT_MARGIN_CELLS: usize = 13;

/// Radius of the ground patch the agent stands on, meters.
pub const FOOTPRINT_RADIUS: f64 = 0.18;

const LOCAL_CAMERA_ROW: i32 = LOCAL_SIZE as i32 - 1;
const LOCAL_CAMERA_COL: i32 = LOCAL_SIZE as i32 / 2;
const EGO_CENTER: i32 = EGO_SIZE as i32 / 2;

/// Camera-centric wedge map. The camera sits at the center of the
/// bottom-center cell looking up (towards row 0); column index grows to the
/// camera's right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalMap {
    pub grid: Grid<u8>,
}

impl LocalMap {
    pub fn empty() -> Self {
        Self { grid: Grid::filled(LOCAL_SIZE, LOCAL_SIZE, UNEXPLORED) }
    }

    /// Offset of a local cell center from the camera, `(forward, left)` meters.
    pub fn cell_offset(cell: Cell) -> (f64, f64) {
        (
            (LOCAL_CAMERA_ROW - cell.row) as f64 * RESOLUTION,
            (LOCAL_CAMERA_COL - cell.col) as f64 * RESOLUTION,
        )
    }

    pub fn nonzero_count(&self) -> usize {
        self.grid.as_slice().iter().filter(|&&v| v != UNEXPLORED).count()
    }
}

/// Projects a depth scan into a [`LocalMap`]: cells a ray crosses before its
/// end point become free, the end cell of a ray that hit something becomes
/// occupied.
pub fn build_local_map(scan: &DepthScan) -> LocalMap {
    let mut local = LocalMap::empty();
    // Local raster coordinates: X grows with column, Y grows with row, origin
    // at the corner of cell (0, 0). The camera sits at the bottom-center cell
    // center and faces -Y.
    let origin = Point::new(
        (LOCAL_CAMERA_COL as f64 + 0.5) * RESOLUTION,
        (LOCAL_CAMERA_ROW as f64 + 0.5) * RESOLUTION,
    );
    for ((&angle, &dist), &hit) in scan.ray_angles.iter().zip(&scan.ray_distances).zip(&scan.hit_flags) {
        let a = angle.to_radians();
        // forward = -Y, left = -X
        let heading = (-a.cos()).atan2(-a.sin()).to_degrees();
        crate::world::raycast_traverse(origin, heading, dist, |cell, t| {
            if t < dist {
                if let Some(v) = local.grid.get_mut(cell) {
                    *v = (*v).max(FREE);
                }
                false
            } else {
                true
            }
        });
        if hit {
            let end = origin.advance(heading, dist + 1e-9).cell(Point::default());
            if let Some(v) = local.grid.get_mut(end) {
                *v = OCCUPIED;
            }
        }
    }
    local
}

/// Pose used for registration and cropping: position plus heading in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point,
    pub heading_deg: f64,
}

impl Pose {
    pub fn new(position: Point, heading_deg: f64) -> Self {
        Self { position, heading_deg }
    }

    fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let (s, c) = self.heading_deg.to_radians().sin_cos();
        ((c, s), (-s, c))
    }

    /// World point at `(forward, left)` meters from the pose.
    fn to_world(&self, forward: f64, left: f64) -> Point {
        let ((fx, fy), (lx, ly)) = self.axes();
        Point::new(self.position.x + forward * fx + left * lx, self.position.y + forward * fy + left * ly)
    }

    /// `(forward, left)` coordinates of a world point.
    fn to_local(&self, p: Point) -> (f64, f64) {
        let ((fx, fy), (lx, ly)) = self.axes();
        let (dx, dy) = (p.x - self.position.x, p.y - self.position.y);
        (dx * fx + dy * fy, dx * lx + dy * ly)
    }
}

/// Accumulated allocentric occupancy map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMap {
    grid: Grid<u8>,
    /// World coordinates of the corner of cell (0, 0).
    origin: Point,
    explored_cells: usize,
}

impl GlobalMap {
    pub fn new(width: usize, height: usize, origin: Point) -> Self {
        Self { grid: Grid::filled(width, height, UNEXPLORED), origin, explored_cells: 0 }
    }

    /// Raster covering `scene` plus `margin` cells on every side, aligned with
    /// the scene grid.
    pub fn for_scene(scene: &Scene, margin: usize) -> Self {
        let m = margin as f64 * RESOLUTION;
        Self::new(scene.width() + 2 * margin, scene.height() + 2 * margin, Point::new(-m, -m))
    }

    pub fn from_grid(grid: Grid<u8>, origin: Point) -> Self {
        let explored_cells = grid.as_slice().iter().filter(|&&v| v != UNEXPLORED).count();
        Self { grid, origin, explored_cells }
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn explored_cells(&self) -> usize {
        self.explored_cells
    }

    pub fn explored_area(&self) -> f64 {
        self.explored_cells as f64 * CELL_AREA
    }

    /// Value at `cell`; outside the raster reads as unexplored.
    #[inline]
    pub fn value(&self, cell: Cell) -> u8 {
        self.grid.get(cell).copied().unwrap_or(UNEXPLORED)
    }

    pub fn cell_of(&self, p: Point) -> Cell {
        p.cell(self.origin)
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        Point::cell_center(cell, self.origin)
    }

    pub fn value_at(&self, p: Point) -> u8 {
        self.value(self.cell_of(p))
    }

    /// True when a straight move of `dist` meters along `heading_deg` would
    /// enter a cell known to be occupied (cells outside the raster count as
    /// occupied). Uses the same cell traversal as the world's collision test.
    /// The starting cell is skipped: the agent stands in it, whatever a
    /// grazing ray may have marked there.
    pub fn move_blocked(&self, from: Point, heading_deg: f64, dist: f64) -> bool {
        let local = Point::new(from.x - self.origin.x, from.y - self.origin.y);
        let start = self.cell_of(from);
        crate::world::raycast_traverse(local, heading_deg, dist, |cell, _| {
            cell != start && self.grid.get(cell).is_none_or(|&v| v == OCCUPIED)
        })
        .is_some()
    }

    /// Raises one cell to at least `value`.
    pub fn raise(&mut self, cell: Cell, value: u8) {
        if let Some(v) = self.grid.get_mut(cell) {
            if *v == UNEXPLORED && value != UNEXPLORED {
                self.explored_cells += 1;
            }
            *v = (*v).max(value);
        }
    }

    /// Marks unexplored cells whose centers lie within `radius` of `center`
    /// as free: the ground under the agent is known without seeing it.
    /// Occupied cells are left alone.
    pub fn mark_footprint(&mut self, center: Point, radius: f64) {
        let c = self.cell_of(center);
        let reach = (radius / RESOLUTION).ceil() as i32;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let cell = c.offset(dr, dc);
                if self.value(cell) == UNEXPLORED && self.grid.contains(cell) && self.cell_center(cell).distance(center) <= radius {
                    self.raise(cell, FREE);
                }
            }
        }
    }

    /// Fuses `local`, observed from `pose` (camera position and heading), by
    /// rigid transform and cellwise max. Each global cell samples its nearest
    /// local cell through the inverse transform.
    pub fn register(&mut self, local: &LocalMap, pose: Pose) -> Result<()> {
        let mut bbox: Option<(i32, i32, i32, i32)> = None;
        for cell in local.grid.cells() {
            if local.grid[cell] == UNEXPLORED {
                continue;
            }
            let (f, l) = LocalMap::cell_offset(cell);
            let g = self.cell_of(pose.to_world(f, l));
            if !self.grid.contains(g) {
                return Err(Error::OutOfBounds { row: g.row as i64, col: g.col as i64 });
            }
            bbox = Some(match bbox {
                None => (g.row, g.row, g.col, g.col),
                Some((r0, r1, c0, c1)) => (r0.min(g.row), r1.max(g.row), c0.min(g.col), c1.max(g.col)),
            });
        }
        let Some((r0, r1, c0, c1)) = bbox else { return Ok(()) };
        let (r0, c0) = ((r0 - 1).max(0), (c0 - 1).max(0));
        let r1 = (r1 + 1).min(self.height() as i32 - 1);
        let c1 = (c1 + 1).min(self.width() as i32 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let g = Cell::new(row, col);
                let (f, l) = pose.to_local(self.cell_center(g));
                let src = Cell::new(
                    (LOCAL_CAMERA_ROW as f64 - f / RESOLUTION).round() as i32,
                    (LOCAL_CAMERA_COL as f64 - l / RESOLUTION).round() as i32,
                );
                if let Some(&v) = local.grid.get(src) {
                    if v != UNEXPLORED {
                        self.raise(g, v);
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes a binary PGM (unexplored 0, free 128, occupied 255), highest
    /// row first, plus a JSON sidecar with `meta`.
    pub fn write_pgm(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        write_pgm(&self.grid, path)?;
        let sidecar = path.with_extension("json");
        let mut body = meta.clone();
        if let Some(obj) = body.as_object_mut() {
            obj.insert("width".into(), self.width().into());
            obj.insert("height".into(), self.height().into());
            obj.insert("origin".into(), serde_json::json!([self.origin.x, self.origin.y]));
            obj.insert("resolution".into(), RESOLUTION.into());
            obj.insert("explored_cells".into(), self.explored_cells.into());
        }
        std::fs::write(&sidecar, serde_json::to_vec_pretty(&body)?).map_err(|e| Error::io(&sidecar, e))
    }
}

/// Encodes an occupancy raster as binary PGM (P5), highest row first.
pub fn encode_pgm(grid: &Grid<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    for row in (0..grid.height() as i32).rev() {
        for col in 0..grid.width() as i32 {
            out.push(match grid[Cell::new(row, col)] {
                UNEXPLORED => 0,
                FREE => 128,
                _ => 255,
            });
        }
    }
    out
}

pub fn write_pgm(grid: &Grid<u8>, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(grid)).map_err(|e| Error::io(path, e))
}

/// Agent-centric crop of the global map, rotated so the body heading points
/// up (row 0). Column index grows to the agent's right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoMap {
    pub grid: Grid<u8>,
}

impl EgoMap {
    pub fn center() -> Cell {
        Cell::new(EGO_CENTER, EGO_CENTER)
    }
}

pub fn crop_ego(global: &GlobalMap, position: Point, body_heading_deg: f64) -> EgoMap {
    let pose = Pose::new(position, body_heading_deg);
    let grid = Grid::from_fn(EGO_SIZE, EGO_SIZE, |cell| {
        let f = (EGO_CENTER - cell.row) as f64 * RESOLUTION;
        let l = (EGO_CENTER - cell.col) as f64 * RESOLUTION;
        global.value_at(pose.to_world(f, l))
    });
    EgoMap { grid }
}

/// Goal sightings keyed by goal index. Entries are never removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectMap {
    pub sightings: BTreeMap<usize, Point>,
}

impl ObjectMap {
    pub fn contains(&self, goal: usize) -> bool {
        self.sightings.contains_key(&goal)
    }

    pub fn len(&self) -> usize {
        self.sightings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sightings.is_empty()
    }
}

/// Adds every goal inside the camera's field of view, within sensor range and
/// with a clear line of sight. Returns the indices added by this call.
pub fn update_object_map(objmap: &mut ObjectMap, scene: &Scene, state: &AgentState, sensor: &SensorConfig) -> Vec<usize> {
    let camera = state.camera_heading().as_f64();
    let mut added = Vec::new();
    for (i, &goal) in scene.goals().iter().enumerate() {
        if objmap.contains(i) {
            continue;
        }
        let dist = state.position.distance(goal);
        if dist > sensor.range {
            continue;
        }
        let in_view = dist == 0.0
            || crate::world::angular_distance(state.position.bearing_to(goal), camera) <= sensor.fov_deg / 2.0;
        if in_view && first_blocked_cell(scene, state.position, goal).is_none() {
            objmap.sightings.insert(i, goal);
            added.push(i);
        }
    }
    added
}
