//! Geodesic distances on occupancy-derived navigation grids.
//!
//! Moves are 8-connected: unit cost for straight steps, `√2` for diagonal
//! ones, and a diagonal step is only allowed when both orthogonal cells it
//! squeezes between are passable. Costs are carried as `(straight, diagonal)`
//! step counts so every search reports a distance through the same formula.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::NEIGHBORS_8;
use crate::mapping::{GlobalMap, FREE, UNEXPLORED};
use crate::world::Scene;
use crate::{Cell, Grid, RESOLUTION};

/// Which map values count as traversable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NavMode {
    /// Free and unexplored cells are passable.
    Optimistic,
    /// Only free cells are passable.
    FreeOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavGrid {
    passable: Grid<bool>,
}

impl NavGrid {
    pub fn new(passable: Grid<bool>) -> Self {
        Self { passable }
    }

    pub fn from_global(global: &GlobalMap, mode: NavMode) -> Self {
        make_navgrid(global, mode)
    }

    /// Ground-truth grid: free scene cells are passable.
    pub fn from_scene(scene: &Scene) -> Self {
        Self::new(Grid::from_fn(scene.width(), scene.height(), |c| !scene.is_occupied(c)))
    }

    pub fn passable(&self) -> &Grid<bool> {
        &self.passable
    }

    #[inline]
    pub fn is_passable(&self, cell: Cell) -> bool {
        self.passable.get(cell).copied().unwrap_or(false)
    }

    pub fn set_passable(&mut self, cell: Cell, value: bool) {
        if let Some(v) = self.passable.get_mut(cell) {
            *v = value;
        }
    }

    pub fn width(&self) -> usize {
        self.passable.width()
    }

    pub fn height(&self) -> usize {
        self.passable.height()
    }

    /// Copy where every cell within `radius` cells (Chebyshev) of a cell
    /// satisfying `blocked` becomes impassable.
    pub fn with_clearance(&self, radius: i32, blocked: impl Fn(Cell) -> bool) -> Self {
        let mut out = self.passable.clone();
        for cell in self.passable.cells() {
            if !blocked(cell) {
                continue;
            }
            for dr in -radius..=radius {
                for dc in -radius..=radius {
                    if let Some(v) = out.get_mut(cell.offset(dr, dc)) {
                        *v = false;
                    }
                }
            }
        }
        Self { passable: out }
    }

    /// Passable neighbors of `cell` with their step kind (`true` = diagonal).
    #[inline]
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        NEIGHBORS_8.iter().filter_map(move |&(dr, dc)| {
            let next = cell.offset(dr, dc);
            if !self.is_passable(next) {
                return None;
            }
            let diagonal = dr != 0 && dc != 0;
            if diagonal && !(self.is_passable(cell.offset(dr, 0)) && self.is_passable(cell.offset(0, dc))) {
                return None;
            }
            Some((next, diagonal))
        })
    }
}

pub fn make_navgrid(global: &GlobalMap, mode: NavMode) -> NavGrid {
    NavGrid::new(global.grid().map(|&v| match mode {
        NavMode::Optimistic => v == UNEXPLORED || v == FREE,
        NavMode::FreeOnly => v == FREE,
    }))
}

/// Path length carried as integer step counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepCount {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCount {
    #[inline]
    pub fn cells(self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }

    #[inline]
    pub fn meters(self) -> f64 {
        self.cells() * RESOLUTION
    }

    #[inline]
    fn push(self, diagonal: bool) -> Self {
        if diagonal {
            Self { diagonal: self.diagonal + 1, ..self }
        } else {
            Self { straight: self.straight + 1, ..self }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub reachable: bool,
    /// Meters; `+∞` when unreachable.
    pub distance: f64,
    /// Cells from start to goal inclusive; empty when unreachable.
    pub waypoints: Vec<Cell>,
}

impl PathResult {
    fn unreachable() -> Self {
        Self { reachable: false, distance: f64::INFINITY, waypoints: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    key: f64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    // Reversed so the max-heap pops the smallest key, then smallest cell.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn octile(a: Cell, b: Cell) -> f64 {
    let dr = (a.row - b.row).unsigned_abs() as f64;
    let dc = (a.col - b.col).unsigned_abs() as f64;
    let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
    (hi - lo) + lo * std::f64::consts::SQRT_2
}

/// Shortest 8-connected path from `start` to `goal`.
pub fn astar(grid: &NavGrid, start: Cell, goal: Cell) -> PathResult {
    astar_bounded(grid, start, goal, f64::INFINITY)
}

/// A* that ignores nodes whose lower bound reaches `max_distance` meters.
/// Paths strictly shorter than the bound are found exactly; anything else is
/// reported unreachable.
pub fn astar_bounded(grid: &NavGrid, start: Cell, goal: Cell, max_distance: f64) -> PathResult {
    if !grid.passable.contains(start) || !grid.is_passable(goal) {
        return PathResult::unreachable();
    }
    if start == goal {
        return PathResult { reachable: true, distance: 0.0, waypoints: vec![start] };
    }
    let bound = max_distance / RESOLUTION;
    let n = grid.passable.len();
    let mut cost: Vec<Option<StepCount>> = vec![None; n];
    let mut parent: Vec<u32> = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let si = grid.passable.index(start);
    cost[si] = Some(StepCount::default());
    open.push(Open { key: octile(start, goal), cell: start });

    while let Some(Open { cell, .. }) = open.pop() {
        let ci = grid.passable.index(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        let g = cost[ci].expect("opened cells have a cost");
        if cell == goal {
            let mut waypoints = vec![goal];
            let mut cur = ci;
            while parent[cur] != u32::MAX {
                cur = parent[cur] as usize;
                waypoints.push(grid.passable.cell_at(cur));
            }
            waypoints.reverse();
            return PathResult { reachable: true, distance: g.meters(), waypoints };
        }
        for (next, diagonal) in grid.neighbors(cell) {
            let ni = grid.passable.index(next);
            let cand = g.push(diagonal);
            let better = match cost[ni] {
                None => true,
                Some(old) => cand.cells() < old.cells(),
            };
            if !better {
                continue;
            }
            let f = cand.cells() + octile(next, goal);
            if f >= bound {
                continue;
            }
            cost[ni] = Some(cand);
            parent[ni] = ci as u32;
            closed[ni] = false;
            open.push(Open { key: f, cell: next });
        }
    }
    PathResult::unreachable()
}

/// Geodesic distance in meters, `+∞` when unreachable.
pub fn geodesic_distance(grid: &NavGrid, start: Cell, goal: Cell) -> f64 {
    astar(grid, start, goal).distance
}

/// Dijkstra from `start`; returns meters per cell, `+∞` where unreachable.
pub fn distance_field(grid: &NavGrid, start: Cell) -> Grid<f64> {
    let mut dist = Grid::filled(grid.width(), grid.height(), f64::INFINITY);
    dijkstra_visit(grid, start, |cell, d| {
        dist[cell] = d;
        false
    });
    dist
}

/// Nearest cell (by geodesic distance from `start`) satisfying `is_target`.
/// Equal distances resolve to the lexicographically smallest cell.
pub fn nearest_target(grid: &NavGrid, start: Cell, is_target: impl Fn(Cell) -> bool) -> Option<(Cell, f64)> {
    let mut found = None;
    dijkstra_visit(grid, start, |cell, d| {
        if is_target(cell) {
            found = Some((cell, d));
            true
        } else {
            false
        }
    });
    found
}

/// Settles cells in `(distance, row, col)` order, calling `visit` on each
/// until it returns `true`.
fn dijkstra_visit(grid: &NavGrid, start: Cell, mut visit: impl FnMut(Cell, f64) -> bool) {
    if !grid.passable.contains(start) {
        return;
    }
    let n = grid.passable.len();
    let mut cost: Vec<Option<StepCount>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    cost[grid.passable.index(start)] = Some(StepCount::default());
    open.push(Open { key: 0.0, cell: start });
    while let Some(Open { cell, .. }) = open.pop() {
        let ci = grid.passable.index(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        let g = cost[ci].expect("opened cells have a cost");
        if visit(cell, g.meters()) {
            return;
        }
        for (next, diagonal) in grid.neighbors(cell) {
            let ni = grid.passable.index(next);
            if closed[ni] {
                continue;
            }
            let cand = g.push(diagonal);
            if cost[ni].is_none_or(|old| cand.cells() < old.cells()) {
                cost[ni] = Some(cand);
                open.push(Open { key: cand.cells(), cell: next });
            }
        }
    }
}

/// Labels passable cells by connected component (same move rules as the
/// planners); impassable cells get `u32::MAX`.
pub fn connected_components(grid: &NavGrid) -> Grid<u32> {
    let mut labels = Grid::filled(grid.width(), grid.height(), u32::MAX);
    let mut next = 0;
    let mut stack = Vec::new();
    for cell in grid.passable.cells() {
        if !grid.is_passable(cell) || labels[cell] != u32::MAX {
            continue;
        }
        labels[cell] = next;
        stack.push(cell);
        while let Some(c) = stack.pop() {
            for (n, _) in grid.neighbors(c) {
                if labels[n] == u32::MAX {
                    labels[n] = next;
                    stack.push(n);
                }
            }
        }
        next += 1;
    }
    labels
}
