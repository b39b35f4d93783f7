//! Scene representation and occlusion geometry for the BiVO stack: agent
//! states and trajectories, viewer-centered occupancy grids, exact ray-cast
//! visibility, and extraction of occluded-agent samples from recorded
//! scenes.

pub mod grid;
pub mod ogm;
pub mod visibility;
pub mod world;

pub use grid::{OccupancyGrid, FREE, OCCLUDED, OCCUPIED};
pub use ogm::{
    agent_occluded_from_ego, build_ground_truth_ogm, build_observed_ogm, build_road_raster,
    extract_occluded_samples, point_in_polygon, rasterize_agents, rasterize_agents_excluding,
    stamp_footprint, ExtractionConfig, OccludedSample,
};
pub use visibility::{ray_cells, shared_ray_table, visibility_from_cells, visibility_mask, RayTable};
pub use world::{
    from_ego_frame, kinematically_feasible, normalize_heading, point_from_frame, point_to_frame,
    to_ego_frame, Agent, AgentClass, AgentState, ControlLimits, Lane, LaneGraph, LanePoint,
    NearestCenterline, Scene, Trajectory,
};

/// Planning step size in seconds.
pub const DT: f64 = 0.5;
/// Planning horizon in steps (5 s at [`DT`]).
pub const HORIZON_STEPS: usize = 10;
/// Past-state window fed to the per-agent sensing model.
pub const PAST_STEPS: usize = 4;
/// Side length of the ego-centered grid in cells.
pub const EGO_GRID_SIZE: usize = 120;
/// Side length of per-agent grids in cells.
pub const AGENT_GRID_SIZE: usize = 30;
/// Meters per grid cell.
pub const GRID_RESOLUTION: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("step {step} outside trajectory [{start}, {start}+{len})")]
    StepOutOfRange { step: usize, start: usize, len: usize },
    #[error("trajectory has {len} states; need at least 2")]
    TrajectoryTooShort { len: usize },
    #[error("agent {0:?} not in scene")]
    AgentNotFound(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("grid shape: {0}")]
    GridShape(String),
}
