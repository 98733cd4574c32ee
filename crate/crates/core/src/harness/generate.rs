//! Procedural scenes and episode sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::planning::{connected_components, distance_field, NavGrid};
use crate::world::{Heading, Point, Scene, Terrain, TURN_DEGREES};
use crate::{Cell, Error, Grid, Result, RESOLUTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Rooms,
    Maze,
    Corridors,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rooms" => Ok(Self::Rooms),
            "maze" => Ok(Self::Maze),
            "corridors" => Ok(Self::Corridors),
            other => Err(Error::InvalidConfig(format!("unknown scene kind `{other}` (rooms, maze, corridors)"))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rooms => "rooms",
            Self::Maze => "maze",
            Self::Corridors => "corridors",
        })
    }
}

/// Smallest scene edge accepted by the generators, meters.
pub const MIN_SCENE_M: f64 = 3.0;

fn meters_to_cells(m: f64) -> usize {
    (m / RESOLUTION).round() as usize
}

/// Generates a sealed scene of roughly `size_m × size_m` whose free space is
/// one connected component.
pub fn generate_scene(kind: SceneKind, size_m: f64, seed: u64) -> Result<Scene> {
    if !(size_m.is_finite() && size_m >= MIN_SCENE_M) {
        return Err(Error::InvalidConfig(format!("scene size must be at least {MIN_SCENE_M} m, got {size_m}")));
    }
    let n = meters_to_cells(size_m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut free = match kind {
        SceneKind::Rooms => rooms(n, &mut rng),
        SceneKind::Maze => maze(n, &mut rng),
        SceneKind::Corridors => corridors(n, &mut rng),
    };
    for cell in free.cells().collect::<Vec<_>>() {
        if cell.row == 0 || cell.col == 0 || cell.row as usize == n - 1 || cell.col as usize == n - 1 {
            free[cell] = false;
        }
    }
    keep_largest_component(&mut free);
    let grid = free.map(|&f| if f { Terrain::Free } else { Terrain::Occupied });
    let scene = Scene::new(grid, Vec::new());
    scene.validate()?;
    Ok(scene)
}

fn keep_largest_component(free: &mut Grid<bool>) {
    let labels = connected_components(&NavGrid::new(free.clone()));
    let mut sizes = std::collections::BTreeMap::<u32, usize>::new();
    for &l in labels.as_slice() {
        if l != u32::MAX {
            *sizes.entry(l).or_default() += 1;
        }
    }
    let Some((&best, _)) = sizes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else { return };
    for cell in labels.cells().collect::<Vec<_>>() {
        if labels[cell] != best {
            free[cell] = false;
        }
    }
}

fn fill_rect(g: &mut Grid<bool>, r0: i32, c0: i32, r1: i32, c1: i32, value: bool) {
    for r in r0.max(0)..r1.min(g.height() as i32) {
        for c in c0.max(0)..c1.min(g.width() as i32) {
            g[Cell::new(r, c)] = value;
        }
    }
}

/// Recursive division into rooms joined by doorways.
fn rooms(n: usize, rng: &mut ChaCha8Rng) -> Grid<bool> {
    let mut g = Grid::filled(n, n, true);
    let wall = 2;
    let door = meters_to_cells(0.9) as i32;
    let min_room = meters_to_cells(2.2) as i32;
    fn split(g: &mut Grid<bool>, rng: &mut ChaCha8Rng, r0: i32, c0: i32, r1: i32, c1: i32, wall: i32, door: i32, min_room: i32) {
        let (h, w) = (r1 - r0, c1 - c0);
        let can_h = h >= 2 * min_room + wall;
        let can_w = w >= 2 * min_room + wall;
        if !can_h && !can_w {
            return;
        }
        let horizontal = if can_h && can_w { h > w || (h == w && rng.gen_bool(0.5)) } else { can_h };
        if horizontal {
            let at = rng.gen_range(r0 + min_room..=r1 - min_room - wall);
            fill_rect(g, at, c0, at + wall, c1, false);
            let d = rng.gen_range(c0..=(c1 - door).max(c0));
            fill_rect(g, at, d, at + wall, d + door, true);
            split(g, rng, r0, c0, at, c1, wall, door, min_room);
            split(g, rng, at + wall, c0, r1, c1, wall, door, min_room);
        } else {
            let at = rng.gen_range(c0 + min_room..=c1 - min_room - wall);
            fill_rect(g, r0, at, r1, at + wall, false);
            let d = rng.gen_range(r0..=(r1 - door).max(r0));
            fill_rect(g, d, at, d + door, at + wall, true);
            split(g, rng, r0, c0, r1, at, wall, door, min_room);
            split(g, rng, r0, at + wall, r1, c1, wall, door, min_room);
        }
    }
    let n = n as i32;
    split(&mut g, rng, 1, 1, n - 1, n - 1, wall, door, min_room);
    g
}

/// Depth-first maze over a lattice of 1.2 m passages with a few extra loops.
fn maze(n: usize, rng: &mut ChaCha8Rng) -> Grid<bool> {
    let mut g = Grid::filled(n, n, false);
    let passage = meters_to_cells(1.2) as i32;
    let wall = 2;
    let pitch = passage + wall;
    let k = ((n as i32 - wall) / pitch).max(1);
    let origin = |i: i32| wall + i * pitch;
    let open_cell = |g: &mut Grid<bool>, r: i32, c: i32| fill_rect(g, origin(r), origin(c), origin(r) + passage, origin(c) + passage, true);
    let open_link = |g: &mut Grid<bool>, r: i32, c: i32, dr: i32, dc: i32| {
        let (r0, c0) = (origin(r), origin(c));
        if dr != 0 {
            let rr = if dr > 0 { r0 + passage } else { r0 - wall };
            fill_rect(g, rr, c0, rr + wall, c0 + passage, true);
        } else {
            let cc = if dc > 0 { c0 + passage } else { c0 - wall };
            fill_rect(g, r0, cc, r0 + passage, cc + wall, true);
        }
    };
    let mut visited = vec![false; (k * k) as usize];
    let mut stack = vec![(0, 0)];
    visited[0] = true;
    open_cell(&mut g, 0, 0);
    while let Some(&(r, c)) = stack.last() {
        let mut nbrs: Vec<(i32, i32)> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter(|(dr, dc)| {
                let (nr, nc) = (r + dr, c + dc);
                nr >= 0 && nc >= 0 && nr < k && nc < k && !visited[(nr * k + nc) as usize]
            })
            .collect();
        if nbrs.is_empty() {
            stack.pop();
            continue;
        }
        nbrs.shuffle(rng);
        let (dr, dc) = nbrs[0];
        open_link(&mut g, r, c, dr, dc);
        visited[((r + dr) * k + c + dc) as usize] = true;
        open_cell(&mut g, r + dr, c + dc);
        stack.push((r + dr, c + dc));
    }
    for _ in 0..(k * k / 6) {
        let (r, c) = (rng.gen_range(0..k), rng.gen_range(0..k));
        let (dr, dc) = *[(1, 0), (0, 1)].choose(rng).expect("non-empty");
        if r + dr < k && c + dc < k {
            open_link(&mut g, r, c, dr, dc);
        }
    }
    g
}

/// Random axis-aligned corridors, each one crossing an earlier corridor.
fn corridors(n: usize, rng: &mut ChaCha8Rng) -> Grid<bool> {
    let mut g = Grid::filled(n, n, false);
    let ni = n as i32;
    let count = 3 + (ni / 40) as usize;
    for i in 0..count {
        let width = rng.gen_range(meters_to_cells(1.0) as i32..=meters_to_cells(1.6) as i32);
        let horizontal = i % 2 == 0;
        let at = rng.gen_range(2..(ni - 2 - width).max(3));
        let (lo, hi) = if i == 0 {
            (2, ni - 2)
        } else {
            let a = rng.gen_range(2..ni / 2);
            let b = rng.gen_range(ni / 2..ni - 2);
            (a, b)
        };
        if horizontal {
            fill_rect(&mut g, at, lo, at + width, hi, true);
        } else {
            fill_rect(&mut g, lo, at, hi, at + width, true);
        }
    }
    // A room-sized bay on a random corridor.
    let bay = meters_to_cells(2.5) as i32;
    let (r, c) = (rng.gen_range(2..(ni - bay - 2).max(3)), rng.gen_range(2..(ni - bay - 2).max(3)));
    fill_rect(&mut g, r, c, r + bay, c + bay, true);
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scene_id: String,
    pub start: Point,
    pub start_heading: Heading,
    pub goals: Vec<Point>,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Gap limits for a scene: `[2, 20]` m, with the upper limit shrunk in
/// proportion for scenes smaller than 20 m.
pub fn default_gap_limits(scene: &Scene) -> (f64, f64) {
    let (w, h) = scene.extent_m();
    let d_min = 2.0;
    let d_max = (20.0 * (w.max(h) / 20.0).min(1.0)).max(d_min + 1.0);
    (d_min, d_max)
}

pub const MAX_ATTEMPTS: usize = 10_000;

fn has_clearance(scene: &Scene, cell: Cell, radius: i32) -> bool {
    (-radius..=radius).all(|dr| (-radius..=radius).all(|dc| !scene.is_occupied(cell.offset(dr, dc))))
}

/// Samples a start and `n_goals` ordered goals so that every consecutive
/// geodesic gap (start → first goal included) lies in `[d_min, d_max]`.
pub fn generate_episode(scene: &Scene, scene_id: &str, n_goals: usize, d_min: f64, d_max: f64, seed: u64) -> Result<EpisodeSpec> {
    if !(d_min >= 0.0 && d_max >= d_min) {
        return Err(Error::InvalidConfig(format!("gap range [{d_min}, {d_max}] is empty")));
    }
    let grid = NavGrid::from_scene(scene);
    let starts: Vec<Cell> = grid.passable().cells().filter(|&c| has_clearance(scene, c, 2)).collect();
    let free: Vec<Cell> = grid.passable().cells().filter(|&c| grid.is_passable(c)).collect();
    if starts.is_empty() {
        return Err(Error::GenerationFailed { attempts: 0, reason: "no free cell with clearance for the start".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fields: std::collections::HashMap<Cell, Grid<f64>> = std::collections::HashMap::new();
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let start = *starts.choose(&mut rng).expect("non-empty");
        let mut prev = start;
        let mut goals = Vec::with_capacity(n_goals);
        for _ in 0..n_goals {
            let field = fields.entry(prev).or_insert_with(|| distance_field(&grid, prev));
            let cand = *free.choose(&mut rng).expect("start exists so free space exists");
            let d = field[cand];
            if !(d >= d_min && d <= d_max) {
                continue 'attempt;
            }
            goals.push(cand);
            prev = cand;
        }
        let heading = Heading::new(TURN_DEGREES * rng.gen_range(0..360 / TURN_DEGREES));
        return Ok(EpisodeSpec {
            scene_id: scene_id.to_string(),
            start: scene.cell_center(start),
            start_heading: heading,
            goals: goals.into_iter().map(|c| scene.cell_center(c)).collect(),
            seed,
        });
    }
    Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS, reason: format!("no goal sequence with gaps in [{d_min}, {d_max}] m") })
}
