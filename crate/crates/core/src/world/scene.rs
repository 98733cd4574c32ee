use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point, GOAL_RADIUS};
use crate::planning::{connected_components, NavGrid};
use crate::{Cell, Error, Grid, Result, RESOLUTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terrain {
    Free,
    Occupied,
}

/// Immutable ground-truth world: occupancy raster plus ordered goal positions.
///
/// Row `r`, column `c` covers `x ∈ [c·res, (c+1)·res)`, `y ∈ [r·res, (r+1)·res)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    grid: Grid<Terrain>,
    goals: Vec<Point>,
    goal_radius: f64,
}

#[derive(Serialize, Deserialize)]
struct SceneHeader {
    resolution: f64,
    width: usize,
    height: usize,
    #[serde(default = "default_goal_radius")]
    goal_radius: f64,
    #[serde(default)]
    goals: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    #[serde(flatten)]
    header: SceneHeader,
    /// Top row (highest y) first, as in the text format.
    rows: Vec<String>,
}

fn default_goal_radius() -> f64 {
    GOAL_RADIUS
}

impl Scene {
    pub fn new(grid: Grid<Terrain>, goals: Vec<Point>) -> Self {
        Self { grid, goals, goal_radius: GOAL_RADIUS }
    }

    pub fn grid(&self) -> &Grid<Terrain> {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn goals(&self) -> &[Point] {
        &self.goals
    }

    pub fn goal_radius(&self) -> f64 {
        self.goal_radius
    }

    pub fn with_goals(&self, goals: Vec<Point>) -> Self {
        Self { grid: self.grid.clone(), goals, goal_radius: self.goal_radius }
    }

    pub fn extent_m(&self) -> (f64, f64) {
        (self.width() as f64 * RESOLUTION, self.height() as f64 * RESOLUTION)
    }

    /// Cells outside the raster read as occupied.
    #[inline]
    pub fn is_occupied(&self, cell: Cell) -> bool {
        !matches!(self.grid.get(cell), Some(Terrain::Free))
    }

    pub fn cell_of(&self, p: Point) -> Cell {
        p.cell(Point::default())
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        Point::cell_center(cell, Point::default())
    }

    pub fn is_free_point(&self, p: Point) -> bool {
        !self.is_occupied(self.cell_of(p))
    }

    /// Checks the scene invariants: sealed boundary, goals on free cells and
    /// all goals in one free component.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width() as i32, self.height() as i32);
        if w < 3 || h < 3 {
            return Err(Error::InvalidConfig(format!("scene too small: {w}x{h}")));
        }
        for col in 0..w {
            for row in [0, h - 1] {
                if !self.is_occupied(Cell::new(row, col)) {
                    return Err(Error::InvalidConfig(format!("boundary cell ({row}, {col}) is free")));
                }
            }
        }
        for row in 0..h {
            for col in [0, w - 1] {
                if !self.is_occupied(Cell::new(row, col)) {
                    return Err(Error::InvalidConfig(format!("boundary cell ({row}, {col}) is free")));
                }
            }
        }
        for (i, g) in self.goals.iter().enumerate() {
            if !self.is_free_point(*g) {
                return Err(Error::InvalidConfig(format!("goal {i} at ({}, {}) is not on a free cell", g.x, g.y)));
            }
        }
        if self.goals.len() > 1 {
            let labels = connected_components(&NavGrid::from_scene(self));
            let first = labels[self.cell_of(self.goals[0])];
            if self.goals.iter().any(|g| labels[self.cell_of(*g)] != first) {
                return Err(Error::InvalidConfig("goals are not mutually reachable".into()));
            }
        }
        Ok(())
    }

    /// Parses the text format: one JSON header line, then rows of `#`/`.`,
    /// highest row first.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header_line = lines.next().ok_or_else(|| parse_err("empty scene file"))?;
        let header: SceneHeader = serde_json::from_str(header_line)
            .map_err(|e| parse_err(format!("header: {e}")))?;
        let rows: Vec<String> = lines
            .map(|l| l.trim_end().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        Self::from_parts(header, &rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&self.header()).expect("header serializes");
        out.push('\n');
        for line in self.rows() {
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: SceneJson = serde_json::from_str(text)?;
        Self::from_parts(json.header, &json.rows)
    }

    pub fn to_json(&self) -> String {
        let json = SceneJson { header: self.header(), rows: self.rows() };
        serde_json::to_string(&json).expect("scene serializes")
    }

    /// Loads either format, chosen by extension (`.json` or text).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_text(&text)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = if path.extension().is_some_and(|e| e == "json") { self.to_json() } else { self.to_text() };
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    fn header(&self) -> SceneHeader {
        SceneHeader {
            resolution: RESOLUTION,
            width: self.width(),
            height: self.height(),
            goal_radius: self.goal_radius,
            goals: self.goals.iter().map(|g| [g.x, g.y]).collect(),
        }
    }

    fn rows(&self) -> Vec<String> {
        (0..self.height())
            .rev()
            .map(|row| {
                (0..self.width())
                    .map(|col| if self.is_occupied(Cell::new(row as i32, col as i32)) { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    fn from_parts(header: SceneHeader, rows: &[String]) -> Result<Self> {
        if (header.resolution - RESOLUTION).abs() > 1e-9 {
            return Err(parse_err(format!("unsupported resolution {}", header.resolution)));
        }
        if rows.len() != header.height {
            return Err(parse_err(format!("expected {} rows, found {}", header.height, rows.len())));
        }
        let mut data = vec![Terrain::Occupied; header.width * header.height];
        for (i, line) in rows.iter().enumerate() {
            let row = header.height - 1 - i;
            if line.chars().count() != header.width {
                return Err(parse_err(format!("row {i} has {} columns, expected {}", line.chars().count(), header.width)));
            }
            for (col, ch) in line.chars().enumerate() {
                data[row * header.width + col] = match ch {
                    '#' => Terrain::Occupied,
                    '.' => Terrain::Free,
                    other => return Err(parse_err(format!("unexpected character {other:?} in row {i}"))),
                };
            }
        }
        Ok(Self {
            grid: Grid::from_vec(header.width, header.height, data),
            goals: header.goals.iter().map(|g| Point::new(g[0], g[1])).collect(),
            goal_radius: header.goal_radius,
        })
    }
}

fn parse_err(reason: impl Into<String>) -> Error {
    Error::Parse { what: "scene".into(), reason: reason.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(w: usize, h: usize) -> Scene {
        let grid = Grid::from_fn(w, h, |c| {
            if c.row == 0 || c.col == 0 || c.row as usize == h - 1 || c.col as usize == w - 1 {
                Terrain::Occupied
            } else {
                Terrain::Free
            }
        });
        Scene::new(grid, vec![Point::new(0.2, 0.2)])
    }

    #[test]
    fn text_roundtrip() {
        let scene = boxed(6, 4);
        let text = scene.to_text();
        assert!(text.lines().nth(1).unwrap().chars().all(|c| c == '#'));
        assert_eq!(Scene::from_text(&text).unwrap(), scene);
        assert_eq!(Scene::from_json(&scene.to_json()).unwrap(), scene);
    }

    #[test]
    fn validate_catches_open_boundary_and_bad_goal() {
        let mut scene = boxed(6, 6);
        scene.validate().unwrap();
        scene.grid[Cell::new(0, 3)] = Terrain::Free;
        assert!(scene.validate().is_err());
        let scene = boxed(6, 6).with_goals(vec![Point::new(0.01, 0.01)]);
        assert!(scene.validate().is_err());
    }

    #[test]
    fn rejects_malformed_rows() {
        let bad = "{\"resolution\":0.08,\"width\":3,\"height\":2}\n###\n#x#\n";
        assert!(Scene::from_text(bad).is_err());
        let short = "{\"resolution\":0.08,\"width\":3,\"height\":3}\n###\n###\n";
        assert!(Scene::from_text(short).is_err());
    }
}
