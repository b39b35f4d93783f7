//! The five-term candidate cost.
//!
//! All positions are world-frame. Collision interactions are point-to-point
//! on (x, y) with a Gaussian radial basis; visible agents contribute their
//! ground-truth futures at weight 1, generated occluded futures contribute
//! at their existence weight.

use bivo_core::{normalize_heading, AgentState, LaneGraph, Trajectory};
use bivo_models::WeightedTrajectory;

use crate::PlannerError;

#[derive(Debug, Clone, Copy)]
pub struct CostWeights {
    pub w_hd: f64,
    pub w_vd: f64,
    pub w_ef: f64,
    pub w_col: f64,
    pub w_goal: f64,
    /// RBF length scale in meters.
    pub rbf_sigma: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w_hd: 1.0,
            w_vd: 1.0,
            w_ef: 0.1,
            w_col: 10.0,
            w_goal: 1.0,
            rbf_sigma: 2.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let all = [self.w_hd, self.w_vd, self.w_ef, self.w_col, self.w_goal];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(PlannerError::Alignment("cost weights must be finite and nonnegative".into()));
        }
        if !(self.rbf_sigma > 0.0) {
            return Err(PlannerError::Alignment("rbf_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// `total` is always the sum of the five terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostBreakdown {
    pub heading: f64,
    pub lane_dev: f64,
    pub effort: f64,
    pub collision: f64,
    pub goal: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn assemble(heading: f64, lane_dev: f64, effort: f64, collision: f64, goal: f64) -> Self {
        CostBreakdown {
            heading,
            lane_dev,
            effort,
            collision,
            goal,
            total: heading + lane_dev + effort + collision + goal,
        }
    }
}

/// Gaussian radial basis on squared distance: exp(-d^2 / (2 sigma^2)).
pub fn rbf(dist_sq: f64, sigma: f64) -> f64 {
    (-dist_sq / (2.0 * sigma * sigma)).exp()
}

fn dist_sq(a: &AgentState, b: &AgentState) -> f64 {
    (a.x - b.x).powi(2) + (a.y - b.y).powi(2)
}

/// Heading, lane deviation, effort, and goal terms (collision left 0):
/// per-state squared heading error against the nearest centerline tangent,
/// per-state squared distance to the nearest centerline, per-state squared
/// acceleration, and the unsquared distance from the final position to the
/// goal position. With no lanes, the lane terms are 0.
pub fn cost_components(
    candidate: &Trajectory,
    lane_graph: &LaneGraph,
    goal: &AgentState,
    weights: &CostWeights,
) -> CostBreakdown {
    let mut heading = 0.0;
    let mut lane_dev = 0.0;
    let mut effort = 0.0;
    for s in &candidate.states {
        if let Some(near) = lane_graph.nearest_centerline(s.x, s.y) {
            heading += normalize_heading(s.heading - near.heading).powi(2);
            lane_dev += near.distance_sq;
        }
        effort += s.accel * s.accel;
    }
    let last = candidate.states.last().expect("trajectories are nonempty");
    let goal_dist = dist_sq(last, goal).sqrt();
    CostBreakdown::assemble(
        weights.w_hd * heading,
        weights.w_vd * lane_dev,
        weights.w_ef * effort,
        0.0,
        weights.w_goal * goal_dist,
    )
}

/// RBF collision mass against visible futures (weight 1) and predicted
/// occluded futures (their existence weights), summed over the timesteps
/// each future shares with the candidate. All trajectories must share the
/// candidate's dt.
pub fn collision_cost(
    candidate: &Trajectory,
    visible_futures: &[Trajectory],
    predicted: &[WeightedTrajectory],
    weights: &CostWeights,
) -> Result<f64, PlannerError> {
    for t in visible_futures
        .iter()
        .chain(predicted.iter().map(|w| &w.trajectory))
    {
        if (t.dt - candidate.dt).abs() > 1e-12 {
            return Err(PlannerError::Alignment(format!(
                "trajectory dt {} does not match candidate dt {}",
                t.dt, candidate.dt
            )));
        }
    }
    let sigma = weights.rbf_sigma;
    let mut mass = 0.0;
    for (i, s) in candidate.states.iter().enumerate() {
        let step = candidate.start_step + i;
        for future in visible_futures {
            if let Ok(a) = future.state_at(step) {
                mass += rbf(dist_sq(s, a), sigma);
            }
        }
        for p in predicted {
            if let Ok(a) = p.trajectory.state_at(step) {
                mass += p.weight * rbf(dist_sq(s, a), sigma);
            }
        }
    }
    Ok(weights.w_col * mass)
}
