//! Episode scoring and multi-seed aggregation.

use serde::{Deserialize, Serialize};

use crate::planning::{astar, NavGrid};
use crate::world::{Point, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub progress: f64,
    pub n_goals: usize,
    pub goals_found: usize,
    /// Agent path length d̄, meters: 0.25 m per executed forward move.
    pub agent_path_len: f64,
    /// Shortest ordered tour start → all goals, d.
    pub oracle_len: f64,
    /// Shortest ordered tour over the found prefix, d′.
    pub found_prefix_oracle_len: f64,
    /// Agent path length when the last found goal was reached, d̄′.
    pub agent_len_to_last_found: f64,
    pub steps: u32,
    /// `(step, explored m²)`; step 0 is the first observation.
    pub explored_area_curve: Vec<(u32, f64)>,
    pub found_all_step: Option<u32>,
}

/// `s · d / max(d, d̄)`.
pub fn spl(result: &EpisodeResult) -> Result<f64> {
    let d = result.oracle_len;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("SPL needs a positive oracle length, got {d}")));
    }
    let s = if result.success { 1.0 } else { 0.0 };
    Ok(s * d / d.max(result.agent_path_len))
}

/// `p · d′ / max(d′, d̄′)`; zero progress scores 0.
pub fn ppl(result: &EpisodeResult) -> Result<f64> {
    let d = result.found_prefix_oracle_len;
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("PPL needs a non-negative oracle length, got {d}")));
    }
    let p = result.progress;
    if p == 0.0 {
        return Ok(0.0);
    }
    let denom = d.max(result.agent_len_to_last_found);
    if denom == 0.0 {
        // Goals found without moving from a start already inside the radius.
        return Ok(p);
    }
    Ok(p * d / denom)
}

/// Per-leg geodesic lengths start → g1 → … on the ground-truth free grid.
pub fn oracle_legs(scene: &Scene, start: Point, goals: &[Point]) -> Vec<f64> {
    let grid = NavGrid::from_scene(scene);
    let mut from = scene.cell_of(start);
    goals
        .iter()
        .map(|g| {
            let to = scene.cell_of(*g);
            let d = astar(&grid, from, to).distance;
            from = to;
            d
        })
        .collect()
}

pub fn oracle_path_length(scene: &Scene, start: Point, goals: &[Point]) -> f64 {
    oracle_legs(scene, start, goals).iter().sum()
}

/// Flat per-episode numbers used for tables and aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub spl: Option<f64>,
    pub ppl: Option<f64>,
    pub success: f64,
    pub progress: f64,
    pub steps: f64,
    pub explored_area: f64,
}

impl EpisodeSummary {
    pub fn from_result(r: &EpisodeResult) -> Self {
        Self {
            spl: spl(r).ok(),
            ppl: ppl(r).ok(),
            success: if r.success { 1.0 } else { 0.0 },
            progress: r.progress,
            steps: r.steps as f64,
            explored_area: r.explored_area_curve.last().map_or(0.0, |p| p.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and sample standard deviation; identical values give exactly `std = 0`.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    if values.iter().all(|v| *v == values[0]) {
        return Some(MeanStd { mean: values[0], std: 0.0, n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Some(MeanStd { mean, std, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub spl: Option<MeanStd>,
    pub ppl: Option<MeanStd>,
    pub success: MeanStd,
    pub progress: MeanStd,
    pub steps: MeanStd,
    pub explored_area: MeanStd,
}

/// Aggregates one summary per seed. SPL/PPL skip episodes where they are
/// undefined.
pub fn aggregate(per_seed: &[EpisodeSummary]) -> Result<AggregateReport> {
    if per_seed.is_empty() {
        return Err(Error::Domain("aggregate needs at least one seed".into()));
    }
    let col = |f: &dyn Fn(&EpisodeSummary) -> f64| mean_std(&per_seed.iter().map(f).collect::<Vec<_>>()).expect("non-empty");
    let opt = |f: &dyn Fn(&EpisodeSummary) -> Option<f64>| mean_std(&per_seed.iter().filter_map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        spl: opt(&|s| s.spl),
        ppl: opt(&|s| s.ppl),
        success: col(&|s| s.success),
        progress: col(&|s| s.progress),
        steps: col(&|s| s.steps),
        explored_area: col(&|s| s.explored_area),
    })
}
