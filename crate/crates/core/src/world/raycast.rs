use serde::{Deserialize, Serialize};

use super::{Point, Scene};
use crate::{Cell, RESOLUTION};

/// Planar stand-in for the depth channel of the RGB-D camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub fov_deg: f64,
    pub range: f64,
    pub n_rays: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { fov_deg: 79.0, range: 4.88, n_rays: 160 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    /// Ray directions relative to the camera heading, degrees, left positive.
    pub ray_angles: Vec<f64>,
    pub ray_distances: Vec<f64>,
    /// `true` when the ray stopped at an obstacle, `false` when range-clipped.
    pub hit_flags: Vec<bool>,
    pub range: f64,
}

impl DepthScan {
    pub fn len(&self) -> usize {
        self.ray_angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ray_angles.is_empty()
    }
}

/// Walks the cells crossed by the ray `origin + t·dir`, `t ∈ [0, max_dist]`,
/// and returns the entry distance and cell of the first blocked one.
///
/// When the ray passes exactly through a cell corner both side cells are
/// visited, so diagonal slips between two blocked cells are reported.
pub(crate) fn march(
    origin: Point,
    heading_deg: f64,
    max_dist: f64,
    mut blocked: impl FnMut(Cell) -> bool,
) -> Option<(f64, Cell)> {
    traverse(origin, heading_deg, max_dist, |cell, _| blocked(cell))
}

/// Visits each cell crossed by the ray together with its entry distance,
/// stopping early when `visit` returns `true`. Cells index a raster whose
/// cell `(0, 0)` has its corner at the coordinate origin.
pub(crate) fn traverse(
    origin: Point,
    heading_deg: f64,
    max_dist: f64,
    mut visit: impl FnMut(Cell, f64) -> bool,
) -> Option<(f64, Cell)> {
    let a = heading_deg.to_radians();
    let (dx, dy) = (a.cos(), a.sin());
    let mut cell = origin.cell(Point::default());
    if visit(cell, 0.0) {
        return Some((0.0, cell));
    }
    let step_col = if dx > 0.0 { 1 } else { -1 };
    let step_row = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |pos: f64, idx: i32, d: f64| -> f64 {
        if d.abs() < 1e-12 {
            f64::INFINITY
        } else {
            let edge = if d > 0.0 { (idx + 1) as f64 * RESOLUTION } else { idx as f64 * RESOLUTION };
            ((edge - pos) / d).max(0.0)
        }
    };
    let mut t_max_x = next_boundary(origin.x, cell.col, dx);
    let mut t_max_y = next_boundary(origin.y, cell.row, dy);
    let t_delta_x = if dx.abs() < 1e-12 { f64::INFINITY } else { RESOLUTION / dx.abs() };
    let t_delta_y = if dy.abs() < 1e-12 { f64::INFINITY } else { RESOLUTION / dy.abs() };

    loop {
        let t = t_max_x.min(t_max_y);
        if t > max_dist {
            return None;
        }
        if (t_max_x - t_max_y).abs() < 1e-12 {
            let side_a = cell.offset(0, step_col);
            let side_b = cell.offset(step_row, 0);
            if visit(side_a, t) {
                return Some((t, side_a));
            }
            if visit(side_b, t) {
                return Some((t, side_b));
            }
            cell = cell.offset(step_row, step_col);
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            cell = cell.offset(0, step_col);
            t_max_x += t_delta_x;
        } else {
            cell = cell.offset(step_row, 0);
            t_max_y += t_delta_y;
        }
        if visit(cell, t) {
            return Some((t, cell));
        }
    }
}

/// First occupied cell entered by the straight segment `from → to`, if any.
pub fn first_blocked_cell(scene: &Scene, from: Point, to: Point) -> Option<Cell> {
    let len = from.distance(to);
    if len == 0.0 {
        return scene.is_occupied(scene.cell_of(from)).then(|| scene.cell_of(from));
    }
    march(from, from.bearing_to(to), len, |c| scene.is_occupied(c)).map(|(_, c)| c)
}

/// Casts `n_rays` rays spread evenly over `fov_deg`, centered on
/// `camera_heading_deg`. Distances are clipped to `range`.
pub fn raycast(
    scene: &Scene,
    position: Point,
    camera_heading_deg: f64,
    fov_deg: f64,
    range: f64,
    n_rays: usize,
) -> DepthScan {
    let mut scan = DepthScan {
        ray_angles: Vec::with_capacity(n_rays),
        ray_distances: Vec::with_capacity(n_rays),
        hit_flags: Vec::with_capacity(n_rays),
        range,
    };
    for i in 0..n_rays {
        let rel = if n_rays == 1 { 0.0 } else { -fov_deg / 2.0 + fov_deg * i as f64 / (n_rays - 1) as f64 };
        let hit = march(position, camera_heading_deg + rel, range, |c| scene.is_occupied(c));
        scan.ray_angles.push(rel);
        match hit {
            Some((d, _)) => {
                scan.ray_distances.push(d.min(range));
                scan.hit_flags.push(true);
            }
            None => {
                scan.ray_distances.push(range);
                scan.hit_flags.push(false);
            }
        }
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Terrain;
    use crate::Grid;

    fn open_scene(w: usize, h: usize) -> Scene {
        let grid = Grid::from_fn(w, h, |c| {
            if c.row == 0 || c.col == 0 || c.row as usize == h - 1 || c.col as usize == w - 1 {
                Terrain::Occupied
            } else {
                Terrain::Free
            }
        });
        Scene::new(grid, vec![])
    }

    /// Slab-method oracle: smallest entry distance over every occupied square.
    fn slab_distance(scene: &Scene, origin: Point, heading: f64, range: f64) -> f64 {
        let (dx, dy) = (heading.to_radians().cos(), heading.to_radians().sin());
        let mut best = range;
        for cell in scene.grid().cells() {
            if !scene.is_occupied(cell) {
                continue;
            }
            let (x0, x1) = (cell.col as f64 * RESOLUTION, (cell.col + 1) as f64 * RESOLUTION);
            let (y0, y1) = (cell.row as f64 * RESOLUTION, (cell.row + 1) as f64 * RESOLUTION);
            let slab = |o: f64, d: f64, lo: f64, hi: f64| {
                if d.abs() < 1e-12 {
                    if o >= lo && o <= hi { (f64::NEG_INFINITY, f64::INFINITY) } else { (f64::INFINITY, f64::NEG_INFINITY) }
                } else {
                    let (a, b) = ((lo - o) / d, (hi - o) / d);
                    (a.min(b), a.max(b))
                }
            };
            let (ax, bx) = slab(origin.x, dx, x0, x1);
            let (ay, by) = slab(origin.y, dy, y0, y1);
            let (enter, exit) = (ax.max(ay).max(0.0), bx.min(by));
            if enter <= exit && enter < best {
                best = enter;
            }
        }
        best
    }

    #[test]
    fn flat_wall_distance() {
        // Wall column 0 spans x < 0.08; agent 2.0 m from its face.
        let scene = open_scene(60, 60);
        let pos = Point::new(0.08 + 2.0, 2.4);
        let scan = raycast(&scene, pos, 180.0, 79.0, 4.88, 161);
        let center = scan.ray_distances[80];
        assert!((center - 2.0).abs() <= RESOLUTION / 2.0, "center {center}");
        assert!(scan.hit_flags[80]);
    }

    #[test]
    fn open_interior_is_range_clipped() {
        let scene = open_scene(200, 200);
        let scan = raycast(&scene, Point::new(8.0, 8.0), 37.0, 79.0, 4.88, 160);
        assert_eq!(scan.len(), 160);
        assert!(scan.ray_distances.iter().all(|&d| d == 4.88));
        assert!(scan.hit_flags.iter().all(|&h| !h));
        assert!((scan.ray_angles[0] + 39.5).abs() < 1e-12);
        assert!((scan.ray_angles[159] - 39.5).abs() < 1e-12);
    }

    #[test]
    fn handcrafted_scene_matches_dense_sampling() {
        let text = "{\"resolution\":0.08,\"width\":10,\"height\":10}\n\
                    ##########\n\
                    #........#\n\
                    #..##....#\n\
                    #........#\n\
                    #.....#..#\n\
                    #.....#..#\n\
                    #..#.....#\n\
                    #........#\n\
                    #........#\n\
                    ##########\n";
        let scene = Scene::from_text(text).unwrap();
        for &(x, y) in &[(0.2, 0.2), (0.45, 0.33), (0.61, 0.15), (0.13, 0.55)] {
            let pos = Point::new(x, y);
            for heading in (0..360).step_by(7) {
                let scan = raycast(&scene, pos, heading as f64, 79.0, 4.88, 40);
                for (a, d) in scan.ray_angles.iter().zip(&scan.ray_distances) {
                    let oracle = slab_distance(&scene, pos, heading as f64 + a, 4.88);
                    assert!((d - oracle).abs() <= RESOLUTION, "pos {pos:?} heading {heading} ray {a}: {d} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn segment_blocking() {
        let scene = open_scene(20, 20);
        assert!(first_blocked_cell(&scene, Point::new(0.5, 0.5), Point::new(1.0, 0.5)).is_none());
        assert_eq!(
            first_blocked_cell(&scene, Point::new(1.4, 0.5), Point::new(1.7, 0.5)),
            Some(Cell::new(6, 19))
        );
    }
}
