//! PNG frames of an episode: ground truth underneath, the built map on top,
//! body and camera arrows, goals and the heuristic target.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::episode::{EpisodeConfig, EpisodeOutput, TrajectoryRecord};
use super::generate::EpisodeSpec;
use crate::mapping::{GlobalMap, FREE, OCCUPIED};
use crate::world::{Point, Scene};
use crate::{Error, Result, RESOLUTION};

/// Pixels per map cell.
pub const SCALE: u32 = 3;

const WALL: Rgb<u8> = Rgb([90, 90, 90]);
const GROUND: Rgb<u8> = Rgb([235, 235, 235]);
const SEEN_FREE: Rgb<u8> = Rgb([170, 210, 255]);
const SEEN_WALL: Rgb<u8> = Rgb([0, 0, 0]);
const GOAL: Rgb<u8> = Rgb([220, 30, 30]);
const BODY: Rgb<u8> = Rgb([20, 60, 200]);
const CAMERA: Rgb<u8> = Rgb([20, 160, 40]);
const TARGET: Rgb<u8> = Rgb([255, 140, 0]);

fn to_pixel(scene: &Scene, p: Point) -> (i64, i64) {
    let h = (scene.height() as u32 * SCALE) as f64;
    let px = p.x / RESOLUTION * SCALE as f64;
    let py = h - p.y / RESOLUTION * SCALE as f64;
    (px.floor() as i64, py.floor() as i64)
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Integer line rasterization between two pixels, both ends included.
fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_disc(img: &mut RgbImage, (cx, cy): (i64, i64), radius: i64, color: Rgb<u8>) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put(img, cx + dx, cy + dy, color);
            }
        }
    }
}

fn draw_arrow(img: &mut RgbImage, scene: &Scene, from: Point, heading_deg: f64, length: f64, color: Rgb<u8>) {
    let tip = from.advance(heading_deg, length);
    let t = to_pixel(scene, tip);
    draw_line(img, to_pixel(scene, from), t, color);
    for side in [150.0, -150.0] {
        draw_line(img, t, to_pixel(scene, tip.advance(heading_deg + side, length * 0.3)), color);
    }
}

/// One frame for the decision at `rec.step`, drawn on `map` as it was
/// before that step's action.
pub fn render_frame(scene: &Scene, map: &GlobalMap, rec: &TrajectoryRecord, probe_radius: f64) -> RgbImage {
    let (w, h) = (scene.width() as u32, scene.height() as u32);
    let mut img = RgbImage::new(w * SCALE, h * SCALE);
    for cell in scene.grid().cells() {
        let center = scene.cell_center(cell);
        let color = match map.value_at(center) {
            OCCUPIED => SEEN_WALL,
            FREE => SEEN_FREE,
            _ if scene.is_occupied(cell) => WALL,
            _ => GROUND,
        };
        let (x0, y0) = ((cell.col as u32) * SCALE, (h - 1 - cell.row as u32) * SCALE);
        for dy in 0..SCALE {
            for dx in 0..SCALE {
                img.put_pixel(x0 + dx, y0 + dy, color);
            }
        }
    }
    for g in scene.goals() {
        draw_disc(&mut img, to_pixel(scene, *g), 2 * SCALE as i64, GOAL);
    }
    let pos = Point::new(rec.x, rec.y);
    draw_disc(&mut img, to_pixel(scene, pos.advance(rec.theta_star_world, probe_radius)), SCALE as i64, TARGET);
    draw_arrow(&mut img, scene, pos, rec.body_heading as f64, 0.6, BODY);
    draw_arrow(&mut img, scene, pos, (rec.body_heading + rec.camera_offset) as f64, 0.9, CAMERA);
    img
}

/// Writes `frame_<step>.png` for every snapshot of the episode; with stride
/// `k` that is `ceil(steps / k)` frames.
pub fn render_frames(scene: &Scene, spec: &EpisodeSpec, output: &EpisodeOutput, cfg: &EpisodeConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scene = scene.with_goals(spec.goals.clone());
    let mut paths = Vec::with_capacity(output.snapshots.len());
    for (step, map) in &output.snapshots {
        let rec = output
            .records
            .iter()
            .find(|r| r.step == *step)
            .ok_or_else(|| Error::Domain(format!("no trajectory record for snapshot step {step}")))?;
        let img = render_frame(&scene, map, rec, cfg.heuristic.r);
        let path = dir.join(format!("frame_{step:05}.png"));
        img.save(&path).map_err(|e| Error::Parse { what: path.display().to_string(), reason: e.to_string() })?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_covers_both_endpoints_and_is_connected() {
        let mut img = RgbImage::new(20, 20);
        draw_line(&mut img, (2, 3), (15, 9), Rgb([1, 1, 1]));
        let lit: Vec<(u32, u32)> = img.enumerate_pixels().filter(|p| p.2[0] == 1).map(|p| (p.0, p.1)).collect();
        assert!(lit.contains(&(2, 3)) && lit.contains(&(15, 9)));
        // One pixel per column for a shallow line.
        assert_eq!(lit.len(), 14);
    }
}
