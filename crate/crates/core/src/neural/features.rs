//! Policy inputs: pooled egocentric map plus one-hot context.

use serde::{Deserialize, Serialize};

use crate::mapping::{crop_ego, EgoMap, GlobalMap, EGO_SIZE};
use crate::world::{AgentState, CameraAction, NavAction, TURN_DEGREES};

pub const POOL: usize = 5;
pub const POOLED: usize = EGO_SIZE / POOL;
pub const MAP_FEATURES: usize = POOLED * POOLED;
/// Camera offsets are multiples of 30°.
pub const OFFSET_BINS: usize = (360 / TURN_DEGREES) as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Number of heuristic probes.
    pub k: usize,
    /// Camera-only policies see the upcoming navigation action; the joint
    /// policy produces it instead.
    pub include_nav: bool,
}

impl FeatureSpec {
    pub fn camera(k: usize) -> Self {
        Self { k, include_nav: true }
    }

    pub fn joint(k: usize) -> Self {
        Self { k, include_nav: false }
    }

    pub fn dim(&self) -> usize {
        MAP_FEATURES + self.k + if self.include_nav { NavAction::ALL.len() } else { 0 } + CameraAction::ALL.len() + OFFSET_BINS
    }
}

/// 5×5 max pooling of the 125×125 egocentric map, scaled to {0, 0.5, 1}.
pub fn pool_ego(ego: &EgoMap) -> Vec<f64> {
    let mut out = vec![0.0; MAP_FEATURES];
    for cell in ego.grid.cells() {
        let (r, c) = (cell.row as usize / POOL, cell.col as usize / POOL);
        let v = ego.grid[cell] as f64 / 2.0;
        let slot = &mut out[r * POOLED + c];
        if v > *slot {
            *slot = v;
        }
    }
    out
}

fn push_onehot(out: &mut Vec<f64>, n: usize, hot: usize) {
    out.extend((0..n).map(|i| if i == hot { 1.0 } else { 0.0 }));
}

/// Feature layout: pooled map | heuristic probe | upcoming nav action (camera
/// policies only) | previous camera action | camera offset.
pub fn build_features(
    spec: &FeatureSpec,
    global: &GlobalMap,
    state: &AgentState,
    heur_index: usize,
    nav: Option<NavAction>,
    prev_cam: CameraAction,
) -> Vec<f64> {
    let ego = crop_ego(global, state.position, state.body_heading.as_f64());
    let mut out = pool_ego(&ego);
    out.reserve(spec.dim() - MAP_FEATURES);
    push_onehot(&mut out, spec.k, heur_index.min(spec.k.saturating_sub(1)));
    if spec.include_nav {
        push_onehot(&mut out, NavAction::ALL.len(), nav.map_or(usize::MAX, NavAction::index));
    }
    push_onehot(&mut out, CameraAction::ALL.len(), prev_cam.index());
    push_onehot(&mut out, OFFSET_BINS, (state.camera_offset.degrees() / TURN_DEGREES) as usize);
    out
}
