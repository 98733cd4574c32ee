use serde::{Deserialize, Serialize};

use crate::{Cell, RESOLUTION};

/// A point in the world frame, meters. `x` grows with column, `y` with row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point reached by travelling `dist` meters along `heading_deg`
    /// (0 = +x, counter-clockwise positive).
    pub fn advance(self, heading_deg: f64, dist: f64) -> Point {
        let a = heading_deg.to_radians();
        Point::new(self.x + dist * a.cos(), self.y + dist * a.sin())
    }

    /// Raster cell containing this point for a raster anchored at `origin`.
    pub fn cell(self, origin: Point) -> Cell {
        Cell::new(
            ((self.y - origin.y) / RESOLUTION).floor() as i32,
            ((self.x - origin.x) / RESOLUTION).floor() as i32,
        )
    }

    /// Center of `cell` for a raster anchored at `origin`.
    pub fn cell_center(cell: Cell, origin: Point) -> Point {
        Point::new(
            origin.x + (cell.col as f64 + 0.5) * RESOLUTION,
            origin.y + (cell.row as f64 + 0.5) * RESOLUTION,
        )
    }

    /// Bearing from `self` to `other` in degrees, `(-180, 180]`.
    pub fn bearing_to(self, other: Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x).to_degrees()
    }
}

/// Integer heading in degrees, normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Heading(i32);

impl Heading {
    pub const ZERO: Heading = Heading(0);

    pub fn new(degrees: i32) -> Self {
        Heading(degrees.rem_euclid(360))
    }

    pub fn degrees(self) -> i32 {
        self.0
    }

    /// Same angle in `(-180, 180]`.
    pub fn signed(self) -> i32 {
        if self.0 > 180 {
            self.0 - 360
        } else {
            self.0
        }
    }

    pub fn rotate(self, delta: i32) -> Self {
        Heading::new(self.0 + delta)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl std::ops::Add for Heading {
    type Output = Heading;

    fn add(self, rhs: Heading) -> Heading {
        Heading::new(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Heading {
    type Output = Heading;

    fn sub(self, rhs: Heading) -> Heading {
        Heading::new(self.0 - rhs.0)
    }
}

/// Wrap an angle in degrees to `(-180, 180]`.
pub fn wrap_signed(deg: f64) -> f64 {
    let mut a = deg.rem_euclid(360.0);
    if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Unsigned angle between two directions in degrees, `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_signed(a - b).abs()
}
