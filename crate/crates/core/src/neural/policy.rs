//! Acting with a trained network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{build_features, FeatureSpec};
use super::net::{softmax, PolicyParams};
use crate::active_cam::HeuristicResult;
use crate::mapping::GlobalMap;
use crate::world::{AgentState, CameraAction, NavAction};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    #[default]
    Sample,
    Greedy,
}

/// Argmax (first index on ties) or a categorical draw from `softmax(logits)`.
pub fn select_action<R: Rng + ?Sized>(logits: &[f64], mode: ActionMode, rng: &mut R) -> usize {
    match mode {
        ActionMode::Greedy => {
            let mut best = 0;
            for (i, l) in logits.iter().enumerate() {
                if *l > logits[best] {
                    best = i;
                }
            }
            best
        }
        ActionMode::Sample => {
            let p = softmax(logits);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn camera_learned<R: Rng + ?Sized>(
    params: &PolicyParams,
    spec: &FeatureSpec,
    global: &GlobalMap,
    heur: &HeuristicResult,
    nav: NavAction,
    state: &AgentState,
    prev_cam: CameraAction,
    hidden: &[f64],
    rng: &mut R,
    mode: ActionMode,
) -> Result<(CameraAction, Vec<f64>)> {
    let x = build_features(spec, global, state, heur.index(), Some(nav), prev_cam);
    let out = params.forward(&x, hidden)?;
    let a = select_action(&out.logits[0], mode, rng);
    Ok((CameraAction::from_index(a).expect("three logits"), out.hidden))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointOutput {
    pub nav_logits: Vec<f64>,
    pub cam_logits: Vec<f64>,
    pub value: f64,
    pub hidden: Vec<f64>,
}

/// Forward pass of a two-head network (navigation head first).
pub fn joint_policy_forward(params: &PolicyParams, feat: &[f64], hidden: &[f64]) -> Result<JointOutput> {
    let mut out = params.forward(feat, hidden)?;
    let cam_logits = out.logits.pop().unwrap_or_default();
    let nav_logits = out.logits.pop().unwrap_or_default();
    Ok(JointOutput { nav_logits, cam_logits, value: out.value, hidden: out.hidden })
}
