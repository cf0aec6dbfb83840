//! Baseline search strategies with fixed sampling trajectories.
//!
//! Linear search walks a line through the start point with alternating,
//! growing offsets; spiral search follows an Archimedean spiral outwards;
//! hybrid search interleaves the two. All three are deterministic.

use serde::{Deserialize, Serialize};

use crate::env::InsertionSession;
use crate::error::{Error, Result};
use crate::linalg::Vec2;

/// Parameters of the linear search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearParams {
    /// Distance unit between successive insertion points, mm.
    pub stride: f64,
    /// Angle of the search line to the x axis, degrees.
    pub angle_deg: f64,
    /// Maximum number of search cycles.
    pub max_cycles: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            stride: 0.4,
            angle_deg: 0.0,
            max_cycles: 30,
        }
    }
}

impl LinearParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.stride > 0.0) || !self.stride.is_finite() {
            return Err(Error::config(
                "linear.stride",
                format!("must be > 0, got {}", self.stride),
            ));
        }
        if !self.angle_deg.is_finite() {
            return Err(Error::config("linear.angle_deg", "must be finite"));
        }
        if self.max_cycles < 1 {
            return Err(Error::config("linear.max_cycles", "must be >= 1"));
        }
        Ok(())
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.angle_deg.to_radians())
    }
}

/// Parameters of the Archimedean spiral search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpiralParams {
    /// Radius reached at the end of the last turn, mm.
    pub max_radius: f64,
    /// Angular increment between successive insertion points, degrees.
    pub angle_step_deg: f64,
    pub turns: usize,
}

impl Default for SpiralParams {
    fn default() -> Self {
        SpiralParams {
            max_radius: 3.0,
            angle_step_deg: 25.0,
            turns: 3,
        }
    }
}

impl SpiralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_radius > 0.0) || !self.max_radius.is_finite() {
            return Err(Error::config("spiral.max_radius", "must be > 0"));
        }
        if !(self.angle_step_deg > 0.0) || !self.angle_step_deg.is_finite() {
            return Err(Error::config("spiral.angle_step_deg", "must be > 0"));
        }
        if self.turns < 1 {
            return Err(Error::config("spiral.turns", "must be >= 1"));
        }
        Ok(())
    }

    /// Cumulative angular range `t·360°`.
    pub fn max_angle_deg(&self) -> f64 {
        self.turns as f64 * 360.0
    }

    /// Radius gained per degree, mm/deg.
    pub fn radius_per_deg(&self) -> f64 {
        self.max_radius / self.max_angle_deg()
    }

    /// Number of points after the origin before the spiral is exhausted.
    pub fn steps(&self) -> usize {
        ((self.max_angle_deg() + ANGLE_SLACK) / self.angle_step_deg).floor() as usize
    }
}

const ANGLE_SLACK: f64 = 1e-9;

/// Hybrid interleaving order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridSchedule {
    /// One linear step, then one spiral step, repeated.
    #[default]
    Alternate,
    /// One linear cycle (two steps, one per side), then the whole spiral,
    /// then the remaining linear steps.
    LinearCycleFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Linear,
    Spiral,
    Done,
}

/// Mutable cursor of one search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchState {
    pub origin: Vec2,
    /// Index of the last emitted candidate; 0 means only the origin so far.
    pub step: usize,
    pub last: Vec2,
    pub mode: Mode,
}

impl SearchState {
    pub fn new(origin: Vec2) -> Self {
        SearchState {
            origin,
            step: 0,
            last: origin,
            mode: Mode::Linear,
        }
    }
}

/// Next linear-search point, or `None` once `max_cycles` points were emitted.
///
/// `Pᵢ = Pᵢ₋₁ + s·i·(−1)ⁱ·(cos θ, sin θ)`, giving offsets −s, +s, −2s, +2s, …
pub fn linear_next(state: &mut SearchState, params: &LinearParams) -> Option<Vec2> {
    if state.step >= params.max_cycles {
        return None;
    }
    let i = state.step + 1;
    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    let p = state.last + params.direction() * (params.stride * i as f64 * sign);
    state.step = i;
    state.last = p;
    Some(p)
}

/// Closed-form linear offset of candidate `k` from the origin.
pub fn linear_offset(params: &LinearParams, k: usize) -> Vec2 {
    let magnitude = params.stride * k.div_ceil(2) as f64;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    params.direction() * (sign * magnitude)
}

/// The `i`-th spiral point: angle `θ_d·i`, radius `r·θ_cur/θ_mx`.
/// `None` once the angle exceeds `t·360°`.
pub fn spiral_point(origin: Vec2, params: &SpiralParams, i: usize) -> Option<Vec2> {
    let theta = params.angle_step_deg * i as f64;
    let theta_max = params.max_angle_deg();
    if theta > theta_max + ANGLE_SLACK {
        return None;
    }
    let r = params.max_radius * (theta / theta_max);
    Some(origin + Vec2::from_angle(theta.to_radians()) * r)
}

/// Next spiral point after the origin, or `None` once the maximum radius is passed.
pub fn spiral_next(state: &mut SearchState, params: &SpiralParams) -> Option<Vec2> {
    let i = state.step + 1;
    let p = spiral_point(state.origin, params, i)?;
    state.step = i;
    state.last = p;
    Some(p)
}

/// Hybrid cursor: two sub-cursors plus the scheduling mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridState {
    pub linear: SearchState,
    pub spiral: SearchState,
    pub mode: Mode,
}

impl HybridState {
    pub fn new(origin: Vec2) -> Self {
        HybridState {
            linear: SearchState::new(origin),
            spiral: SearchState::new(origin),
            mode: Mode::Linear,
        }
    }
}

/// Next hybrid candidate according to `schedule`; `None` when both
/// sub-searches are exhausted.
pub fn hybrid_next(
    state: &mut HybridState,
    lp: &LinearParams,
    sp: &SpiralParams,
    schedule: HybridSchedule,
) -> Option<Vec2> {
    loop {
        let (candidate, next_mode) = match (state.mode, schedule) {
            (Mode::Done, _) => return None,
            (Mode::Linear, HybridSchedule::Alternate) => {
                (linear_next(&mut state.linear, lp), Mode::Spiral)
            }
            (Mode::Spiral, HybridSchedule::Alternate) => {
                (spiral_next(&mut state.spiral, sp), Mode::Linear)
            }
            (Mode::Linear, HybridSchedule::LinearCycleFirst) => {
                let p = linear_next(&mut state.linear, lp);
                // After the first cycle (two steps) hand over to the spiral,
                // unless the spiral is already used up.
                let spiral_left = state.spiral.step < sp.steps();
                let next = if state.linear.step >= 2 && spiral_left {
                    Mode::Spiral
                } else {
                    Mode::Linear
                };
                (p, next)
            }
            (Mode::Spiral, HybridSchedule::LinearCycleFirst) => {
                (spiral_next(&mut state.spiral, sp), Mode::Spiral)
            }
        };
        match candidate {
            Some(p) => {
                state.mode = next_mode;
                return Some(p);
            }
            None => {
                let linear_done = state.linear.step >= lp.max_cycles;
                let spiral_done =
                    spiral_point(state.spiral.origin, sp, state.spiral.step + 1).is_none();
                if linear_done && spiral_done {
                    state.mode = Mode::Done;
                    return None;
                }
                state.mode = if state.mode == Mode::Linear {
                    Mode::Spiral
                } else {
                    Mode::Linear
                };
            }
        }
    }
}

/// A baseline strategy with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Linear(LinearParams),
    Spiral(SpiralParams),
    Hybrid {
        linear: LinearParams,
        spiral: SpiralParams,
        schedule: HybridSchedule,
    },
}

/// Iterator over a strategy's candidates after the start point.
#[derive(Debug, Clone)]
pub struct Candidates {
    strategy: Strategy,
    single: SearchState,
    hybrid: HybridState,
}

impl Strategy {
    pub fn candidates(&self, origin: Vec2) -> Candidates {
        Candidates {
            strategy: *self,
            single: SearchState::new(origin),
            hybrid: HybridState::new(origin),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Linear(_) => "linear",
            Strategy::Spiral(_) => "spiral",
            Strategy::Hybrid { .. } => "hybrid",
        }
    }
}

impl Iterator for Candidates {
    type Item = Vec2;
    fn next(&mut self) -> Option<Vec2> {
        match &self.strategy {
            Strategy::Linear(p) => linear_next(&mut self.single, p),
            Strategy::Spiral(p) => spiral_next(&mut self.single, p),
            Strategy::Hybrid {
                linear,
                spiral,
                schedule,
            } => hybrid_next(&mut self.hybrid, linear, spiral, *schedule),
        }
    }
}

/// Outcome of searching one hole.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub success: bool,
    pub attempts: usize,
    pub final_position: Vec2,
    pub trajectory: Vec<Vec2>,
}

impl SearchResult {
    pub(crate) fn from_trajectory(trajectory: Vec<Vec2>, success: bool) -> Self {
        SearchResult {
            success,
            attempts: trajectory.len(),
            final_position: trajectory.last().copied().unwrap_or_default(),
            trajectory,
        }
    }
}

/// Tries `start`, then the strategy's candidates, until success, `budget`
/// attempts, or exhaustion of the trajectory.
pub fn run_strategy(
    strategy: &Strategy,
    session: &mut InsertionSession<'_>,
    board: usize,
    hole: usize,
    start: Vec2,
    budget: usize,
) -> Result<SearchResult> {
    if budget < 1 {
        return Err(Error::Usage("search budget must be >= 1".into()));
    }
    let mut trajectory = Vec::new();
    for p in std::iter::once(start)
        .chain(strategy.candidates(start))
        .take(budget)
    {
        trajectory.push(p);
        if session.attempt_insert(board, hole, p)?.success {
            return Ok(SearchResult::from_trajectory(trajectory, true));
        }
    }
    Ok(SearchResult::from_trajectory(trajectory, false))
}
