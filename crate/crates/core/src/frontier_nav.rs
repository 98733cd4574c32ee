//! Mapping + frontier-based exploration (FBE) navigation policy.
//!
//! The policy is stateless: every step it re-detects frontiers on the current
//! map, picks a target (the current goal once sighted, else the nearest
//! frontier), plans with A* and steers towards the path with a fixed
//! turn/forward rule.

use serde::{Deserialize, Serialize};

use crate::grid::{NEIGHBORS_4, NEIGHBORS_8};
use crate::mapping::{GlobalMap, ObjectMap, FREE, OCCUPIED, UNEXPLORED};
use crate::planning::{astar, make_navgrid, nearest_target, NavGrid, NavMode, PathResult};
use crate::world::{wrap_signed, AgentState, NavAction, Point, FORWARD_METERS, TURN_DEGREES};
use crate::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    /// Minimum cluster size kept by frontier detection.
    pub min_frontier_cells: usize,
    /// Cells around known obstacles kept out of planned paths.
    pub clearance_cells: i32,
    /// Steering aims at the first waypoint at least this far ahead, meters.
    pub lookahead: f64,
    /// Heading error tolerated before turning, degrees.
    pub turn_threshold_deg: f64,
    /// Navigate to sighted goals; off for pure exploration runs.
    pub seek_goals: bool,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self { min_frontier_cells: 3, clearance_cells: 1, lookahead: 0.3, turn_threshold_deg: 15.0, seek_goals: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub cells: Vec<Cell>,
    pub representative: Cell,
    /// Meters from the agent; `+∞` until measured.
    pub geodesic_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    Goal,
    Frontier,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavTarget {
    pub kind: TargetKind,
    pub cell: Cell,
    pub path: PathResult,
}

impl NavTarget {
    fn none() -> Self {
        Self {
            kind: TargetKind::None,
            cell: Cell::new(0, 0),
            path: PathResult { reachable: false, distance: f64::INFINITY, waypoints: Vec::new() },
        }
    }
}

/// Free cell with at least one unexplored 4-neighbor inside the raster.
pub fn is_frontier_cell(global: &GlobalMap, cell: Cell) -> bool {
    global.value(cell) == FREE
        && NEIGHBORS_4.iter().any(|&(dr, dc)| {
            let n = cell.offset(dr, dc);
            global.grid().contains(n) && global.value(n) == UNEXPLORED
        })
}

/// Frontier cells grouped into 8-connected clusters of at least
/// `min_cells` members, ordered by their smallest cell.
pub fn detect_frontiers(global: &GlobalMap, min_cells: usize) -> Vec<Frontier> {
    let grid = global.grid();
    let mut seen = vec![false; grid.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for cell in grid.cells() {
        let i = grid.index(cell);
        if seen[i] || !is_frontier_cell(global, cell) {
            continue;
        }
        seen[i] = true;
        stack.push(cell);
        let mut members = Vec::new();
        while let Some(c) = stack.pop() {
            members.push(c);
            for &(dr, dc) in &NEIGHBORS_8 {
                let n = c.offset(dr, dc);
                if grid.contains(n) && !seen[grid.index(n)] && is_frontier_cell(global, n) {
                    seen[grid.index(n)] = true;
                    stack.push(n);
                }
            }
        }
        if members.len() < min_cells {
            continue;
        }
        members.sort();
        let k = members.len() as f64;
        let cr = members.iter().map(|c| c.row as f64).sum::<f64>() / k;
        let cc = members.iter().map(|c| c.col as f64).sum::<f64>() / k;
        let representative = *members
            .iter()
            .min_by(|a, b| {
                let da = (a.row as f64 - cr).powi(2) + (a.col as f64 - cc).powi(2);
                let db = (b.row as f64 - cr).powi(2) + (b.col as f64 - cc).powi(2);
                da.total_cmp(&db).then_with(|| a.cmp(b))
            })
            .expect("cluster is non-empty");
        out.push(Frontier { cells: members, representative, geodesic_dist: f64::INFINITY });
    }
    out
}

/// Optimistic grid with a clearance band around known obstacles. Cells in the
/// agent's 3×3 neighborhood keep their raw passability so an agent hugging a
/// wall can still leave.
fn planning_grid(global: &GlobalMap, agent: Cell, clearance: i32) -> NavGrid {
    let raw = make_navgrid(global, NavMode::Optimistic);
    if clearance <= 0 {
        return raw;
    }
    let mut grid = raw.with_clearance(clearance, |c| global.value(c) == OCCUPIED);
    for dr in -1..=1 {
        for dc in -1..=1 {
            let c = agent.offset(dr, dc);
            grid.set_passable(c, raw.is_passable(c));
        }
    }
    grid.set_passable(agent, true);
    grid
}

fn plan_to(global: &GlobalMap, agent: Cell, goal: Cell, clearance: i32) -> PathResult {
    let mut grid = planning_grid(global, agent, clearance);
    grid.set_passable(goal, global.value(goal) != OCCUPIED);
    let path = astar(&grid, agent, goal);
    if path.reachable || clearance == 0 {
        return path;
    }
    plan_to(global, agent, goal, 0)
}

fn nearest_frontier(global: &GlobalMap, agent: Cell, frontiers: &[Frontier], clearance: i32) -> Option<(usize, f64)> {
    let mut grid = planning_grid(global, agent, clearance);
    for f in frontiers {
        grid.set_passable(f.representative, true);
    }
    let found = nearest_target(&grid, agent, |c| frontiers.iter().any(|f| f.representative == c));
    match found {
        Some((cell, d)) => frontiers.iter().position(|f| f.representative == cell).map(|i| (i, d)),
        None if clearance > 0 => nearest_frontier(global, agent, frontiers, 0),
        None => None,
    }
}

pub fn select_target(global: &GlobalMap, objmap: &ObjectMap, state: &AgentState, cfg: &NavConfig) -> NavTarget {
    let agent = global.cell_of(state.position);
    if cfg.seek_goals {
        if let Some(&goal) = objmap.sightings.get(&state.current_goal_index) {
            let cell = global.cell_of(goal);
            let path = plan_to(global, agent, cell, cfg.clearance_cells);
            return NavTarget { kind: TargetKind::Goal, cell, path };
        }
    }
    let frontiers = detect_frontiers(global, cfg.min_frontier_cells);
    let Some((idx, _)) = nearest_frontier(global, agent, &frontiers, cfg.clearance_cells) else {
        return NavTarget::none();
    };
    let cell = frontiers[idx].representative;
    let path = plan_to(global, agent, cell, cfg.clearance_cells);
    NavTarget { kind: TargetKind::Frontier, cell, path }
}

/// Signed heading error (degrees, left positive) from the body heading to
/// the steering point of `path`, or `None` when the agent is already on the
/// final cell.
pub fn steering_error(global: &GlobalMap, state: &AgentState, path: &PathResult, lookahead: f64) -> Option<f64> {
    let agent = state.position;
    let centers: Vec<Point> = path.waypoints.iter().skip(1).map(|&c| global.cell_center(c)).collect();
    let aim = centers.iter().find(|p| p.distance(agent) >= lookahead).or(centers.last())?;
    if aim.distance(agent) < 1e-9 {
        return None;
    }
    Some(wrap_signed(agent.bearing_to(*aim) - state.body_heading.as_f64()))
}

pub fn local_controller(global: &GlobalMap, state: &AgentState, target: &NavTarget, cfg: &NavConfig) -> NavAction {
    if target.kind == TargetKind::None || !target.path.reachable {
        return NavAction::TurnLeft;
    }
    match steering_error(global, state, &target.path, cfg.lookahead) {
        None => NavAction::TurnLeft,
        Some(phi) => {
            let body = state.body_heading.as_f64();
            blocked_heading_rule(phi, cfg.turn_threshold_deg, |delta| {
                global.move_blocked(state.position, body + delta as f64, FORWARD_METERS)
            })
        }
    }
}

/// Heading rule aware of known obstacles: go forward when the error is within
/// the threshold and the move is free, otherwise head for the free discrete
/// heading closest to the desired direction (ties: the smaller turn, then
/// left). With nothing blocked and a threshold of half a turn this equals
/// [`heading_rule`].
pub fn blocked_heading_rule(phi: f64, threshold: f64, blocked: impl Fn(i32) -> bool) -> NavAction {
    if phi.abs() <= threshold && !blocked(0) {
        return NavAction::Forward;
    }
    let mut best: Option<(f64, i32, i32)> = None;
    for k in -(180 / TURN_DEGREES) + 1..=180 / TURN_DEGREES {
        let delta = k * TURN_DEGREES;
        if blocked(delta) {
            continue;
        }
        let key = (wrap_signed(phi - delta as f64).abs(), delta.abs(), -delta.signum());
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    match best {
        None => NavAction::TurnLeft,
        Some((_, 0, _)) => NavAction::Forward,
        // Straight back is reachable either way round; take the side of phi.
        Some((_, 180, _)) if phi < 0.0 => NavAction::TurnRight,
        Some((_, _, s)) if s < 0 => NavAction::TurnLeft,
        Some(_) => NavAction::TurnRight,
    }
}

/// Turn/forward decision for a heading error `phi` in degrees.
pub fn heading_rule(phi: f64, threshold: f64) -> NavAction {
    if phi.abs() <= threshold {
        NavAction::Forward
    } else if phi > 0.0 {
        NavAction::TurnLeft
    } else {
        NavAction::TurnRight
    }
}

pub fn nav_policy_step(global: &GlobalMap, objmap: &ObjectMap, state: &AgentState, cfg: &NavConfig) -> NavAction {
    let target = select_target(global, objmap, state, cfg);
    local_controller(global, state, &target, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Heading;
    use crate::{Grid, RESOLUTION};

    fn map_from(rows: &[&str]) -> GlobalMap {
        // Text rows, first row = row 0. '.' free, '#' occupied, ' ' unexplored.
        let h = rows.len();
        let w = rows[0].len();
        let grid = Grid::from_fn(w, h, |c| match rows[c.row as usize].as_bytes()[c.col as usize] {
            b'.' => FREE,
            b'#' => OCCUPIED,
            _ => UNEXPLORED,
        });
        GlobalMap::from_grid(grid, Point::default())
    }

    fn explored(w: usize, h: usize) -> GlobalMap {
        GlobalMap::from_grid(Grid::filled(w, h, FREE), Point::default())
    }

    #[test]
    fn fully_explored_has_no_frontiers() {
        assert!(detect_frontiers(&explored(20, 20), 3).is_empty());
    }

    #[test]
    fn straight_boundary_is_one_cluster() {
        let grid = Grid::from_fn(20, 20, |c| if c.col < 10 { FREE } else { UNEXPLORED });
        let map = GlobalMap::from_grid(grid, Point::default());
        let fr = detect_frontiers(&map, 3);
        assert_eq!(fr.len(), 1);
        assert_eq!(fr[0].cells.len(), 20);
        assert!(fr[0].cells.iter().all(|c| c.col == 9));
    }

    #[test]
    fn two_pockets_match_exhaustive_scan() {
        let map = map_from(&[
            "############",
            "#..........#",
            "#.  ...... #",
            "#.  .......#",
            "#..........#",
            "#.......   #",
            "#.......   #",
            "############",
        ]);
        let fr = detect_frontiers(&map, 3);
        assert_eq!(fr.len(), 2);
        let mut got: Vec<Cell> = fr.iter().flat_map(|f| f.cells.clone()).collect();
        got.sort();
        let mut expected: Vec<Cell> = map.grid().cells().filter(|&c| is_frontier_cell(&map, c)).collect();
        expected.sort();
        // The lone unexplored cell at (2, 10) yields a 2-cell cluster, dropped.
        let dropped: Vec<Cell> = expected.iter().copied().filter(|c| !got.contains(c)).collect();
        assert!(dropped.iter().all(|c| (c.row - 2).abs() <= 1 && (c.col - 10).abs() <= 1));
        for c in &got {
            assert!(is_frontier_cell(&map, *c));
        }
    }

    #[test]
    fn sighted_goal_wins_over_frontiers() {
        let map = map_from(&["..........", "..........", "..........", "....      "]);
        let state = AgentState::new(map.cell_center(Cell::new(1, 1)), Heading::ZERO);
        let mut objmap = ObjectMap::default();
        objmap.sightings.insert(0, map.cell_center(Cell::new(0, 8)));
        let t = select_target(&map, &objmap, &state, &NavConfig::default());
        assert_eq!(t.kind, TargetKind::Goal);
        assert_eq!(t.cell, Cell::new(0, 8));
        assert!(t.path.reachable);
    }

    #[test]
    fn controller_thresholds() {
        assert_eq!(heading_rule(0.0, 15.0), NavAction::Forward);
        assert_eq!(heading_rule(90.0, 15.0), NavAction::TurnLeft);
        assert_eq!(heading_rule(-16.0, 15.0), NavAction::TurnRight);
        assert_eq!(heading_rule(15.0, 15.0), NavAction::Forward);
    }

    #[test]
    fn exhausted_map_rotates_in_place() {
        let map = explored(15, 15);
        let state = AgentState::new(map.cell_center(Cell::new(7, 7)), Heading::ZERO);
        let objmap = ObjectMap::default();
        for _ in 0..3 {
            assert_eq!(nav_policy_step(&map, &objmap, &state, &NavConfig::default()), NavAction::TurnLeft);
        }
    }

    #[test]
    fn blocked_rule_dodges_without_turning_back() {
        // Straight ahead is blocked: turn toward the nearest free heading.
        assert_eq!(blocked_heading_rule(0.0, 15.0, |d| d == 0), NavAction::TurnLeft);
        assert_eq!(blocked_heading_rule(-5.0, 15.0, |d| d == 0), NavAction::TurnRight);
        // After the dodge the old heading (now 30° to the right) is blocked,
        // so the agent moves on instead of turning back into the wall.
        assert_eq!(blocked_heading_rule(-30.0, 15.0, |d| d == -30), NavAction::Forward);
        assert_eq!(blocked_heading_rule(10.0, 15.0, |_| true), NavAction::TurnLeft);
        assert_eq!(blocked_heading_rule(-178.0, 15.0, |_| false), NavAction::TurnRight);
        assert_eq!(blocked_heading_rule(178.0, 15.0, |_| false), NavAction::TurnLeft);
    }

    #[test]
    fn controller_does_not_push_into_a_known_wall() {
        // Wall one cell ahead of the agent, path (as planned) straight through
        // the corner: the controller must not choose FORWARD.
        let mut map = explored(40, 40);
        let state = AgentState::new(Point::new(1.0, 1.0), Heading::new(0));
        let wall = map.cell_of(Point::new(1.1, 1.0));
        map.raise(wall, OCCUPIED);
        let waypoints = vec![map.cell_of(state.position), map.cell_of(Point::new(1.6, 1.0))];
        let path = PathResult { reachable: true, distance: 0.6, waypoints };
        let target = NavTarget { kind: TargetKind::Frontier, cell: path.waypoints[1], path };
        assert_ne!(local_controller(&map, &state, &target, &NavConfig::default()), NavAction::Forward);
    }

    proptest::proptest! {
        #[test]
        fn blocked_rule_matches_plain_rule_in_open_space(phi in -179.0f64..179.0) {
            proptest::prop_assert_eq!(blocked_heading_rule(phi, 15.0, |_| false), heading_rule(phi, 15.0));
        }
    }

    #[test]
    fn goal_ahead_means_forward() {
        let map = explored(60, 60);
        let state = AgentState::new(map.cell_center(Cell::new(30, 10)), Heading::ZERO);
        let mut objmap = ObjectMap::default();
        objmap.sightings.insert(0, state.position.advance(0.0, 1.0));
        assert_eq!(nav_policy_step(&map, &objmap, &state, &NavConfig::default()), NavAction::Forward);
    }

    #[test]
    fn steering_is_deterministic_and_reaches_target() {
        let map = explored(80, 80);
        let objmap = {
            let mut o = ObjectMap::default();
            o.sightings.insert(0, map.cell_center(Cell::new(60, 65)));
            o
        };
        let cfg = NavConfig::default();
        let mut state = AgentState::new(map.cell_center(Cell::new(10, 10)), Heading::new(180));
        let scene_free = |_p: Point| true;
        let mut last_dist = f64::INFINITY;
        let mut since_decrease = 0;
        let mut aligned = false;
        for _ in 0..200 {
            let a = nav_policy_step(&map, &objmap, &state, &cfg);
            assert_eq!(a, nav_policy_step(&map, &objmap, &state, &cfg));
            match a {
                NavAction::Forward => {
                    let p = state.position.advance(state.body_heading.as_f64(), 0.25);
                    assert!(scene_free(p));
                    state.position = p;
                    aligned = true;
                }
                other => state.body_heading = state.body_heading.rotate(other.rotation()),
            }
            let d = select_target(&map, &objmap, &state, &cfg).path.distance;
            if d < last_dist - 1e-9 {
                since_decrease = 0;
            } else {
                since_decrease += 1;
            }
            if aligned {
                assert!(since_decrease <= 2, "no progress for {since_decrease} steps");
            }
            last_dist = d;
            if d < 2.0 * RESOLUTION {
                return;
            }
        }
        panic!("target not reached");
    }
}
