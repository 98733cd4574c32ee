//! Exploration reward: heuristic alignment, area gain and the motor penalty.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, CELL_AREA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Off for the ablation that drops the motor penalty.
    #[serde(default = "default_true")]
    pub turn_penalty: bool,
}

fn default_true() -> bool {
    true
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha: 10.0, beta: 1.0, turn_penalty: true }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("reward weights must be finite and >= 0, got alpha={} beta={}", self.alpha, self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardState {
    /// Camera-to-heuristic angle of the previous step, degrees.
    pub s_prev: f64,
    /// Explored area of the previous step, m².
    pub c_prev: f64,
}

impl RewardState {
    pub fn new(s: f64, explored_cells: usize) -> Self {
        Self { s_prev: s, c_prev: explored_area(explored_cells) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_heuristic: f64,
    pub r_area: f64,
    pub r_turn_penalty: f64,
    pub total: f64,
}

pub fn explored_area(explored_cells: usize) -> f64 {
    explored_cells as f64 * CELL_AREA
}

pub fn reward_step(
    rstate: &RewardState,
    s_now: f64,
    c_now: f64,
    motor_actuated: bool,
    cfg: &RewardConfig,
) -> Result<(RewardBreakdown, RewardState)> {
    if !(0.0..=180.0).contains(&s_now) {
        return Err(Error::Domain(format!("heuristic angle {s_now} outside [0, 180]")));
    }
    if !(c_now >= rstate.c_prev) {
        return Err(Error::Domain(format!("explored area shrank from {} to {c_now}", rstate.c_prev)));
    }
    let r_heuristic = rstate.s_prev - s_now;
    let r_area = c_now - rstate.c_prev;
    let r_turn_penalty = if motor_actuated { 1.0 } else { 0.0 };
    let applied_penalty = if cfg.turn_penalty { r_turn_penalty } else { 0.0 };
    let total = cfg.alpha * r_heuristic + cfg.beta * r_area - applied_penalty;
    Ok((RewardBreakdown { r_heuristic, r_area, r_turn_penalty, total }, RewardState { s_prev: s_now, c_prev: c_now }))
}

/// Fraction of steps that ran the camera motor; 0 for an empty log.
pub fn motor_actuation_rate(flags: impl IntoIterator<Item = bool>) -> f64 {
    let (mut on, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        on += f as usize;
    }
    if n == 0 {
        0.0
    } else {
        on as f64 / n as f64
    }
}
