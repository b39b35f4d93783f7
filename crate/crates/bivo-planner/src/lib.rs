//! Sampling-based planner with occlusion-aware collision cost.
//!
//! Candidates are cubic Hermite splines from the ego state to terminal
//! states sampled along the lane graph. Each candidate is scored by five
//! terms (heading deviation, lane deviation, control effort, collision,
//! goal distance); the collision term sums a Gaussian radial basis over
//! visible agents' ground-truth futures plus, depending on the mode, a
//! probability-weighted set of generated occluded futures. The candidate
//! with the lowest total wins, first index on ties.

pub mod candidates;
pub mod cost;
pub mod plan;

pub use candidates::{
    emergency_trajectory, generate_candidates, sample_terminals, spline_connect, CandidateSet,
};
pub use cost::{collision_cost, cost_components, rbf, CostBreakdown, CostWeights};
pub use plan::{
    future_window, plan, plan_with_candidates, PlanResult, PlannerConfig, PlannerMode,
    PlannerModels,
};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("ego has no state at step {0}")]
    NoEgoState(usize),
    #[error("mode {mode} requires the {which} model")]
    MissingModel { mode: &'static str, which: &'static str },
    #[error("time alignment: {0}")]
    Alignment(String),
    #[error(transparent)]
    Core(#[from] bivo_core::CoreError),
    #[error(transparent)]
    Model(#[from] bivo_models::ModelError),
}
