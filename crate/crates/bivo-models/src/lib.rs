//! The two generative stages of the BiVO occlusion model.
//!
//! Stage one ([`driver_sensor`]) treats every visible agent as a sensor: a
//! CVAE with a discrete latent reconstructs the occupancy grid around that
//! agent from its recent motion, and the reconstructions are fused with the
//! ego's own observation into a single ego-centered belief grid
//! ([`belief`]).
//!
//! Stage two ([`trajgen`]) is a CVAE over futures of agents the ego cannot
//! see, conditioned on the road layout and the fused grid; its samples feed
//! the planner's collision cost.

pub mod belief;
pub mod driver_sensor;
mod params;
pub mod trajgen;

pub use belief::{
    dempster_combine, fuse_to_ego, pignistic, to_belief, BeliefCell, FusedScene, DISCOUNT_U0,
};
pub use driver_sensor::{
    agent_visible_to_ego, ds_loss, ds_loss_grad, fuse_scene, history_features,
    mine_driver_sensor_pairs,
    reconstruct_most_likely, reconstruct_probs, train_driver_sensor, train_driver_sensor_from,
    DriverSensorModel, DsConfig,
    DsLossBreakdown, DsPair, DsTrainConfig, DsTrainRecord, DsTrainRun, MiningConfig,
};
pub use trajgen::{
    assemble_condition, gen_elbo_loss, gen_elbo_loss_grad, gen_rows_from_scene, row_from_sample,
    sample_trajectories, train_generator, train_generator_from, GenConfig, GenEpochRecord,
    GenLossBreakdown, GenRow,
    GenStepRecord, GenTrainConfig, GenTrainRun, OcclusionGenModel, SampleOptions,
    WeightedTrajectory,
};

/// Everything a checkpoint needs to continue an interrupted training run:
/// the flat parameter vector, the Adam moment vectors bound to it, and the
/// number of optimizer steps already taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: usize,
}

impl TrainState {
    pub(crate) fn check(&self) -> Result<(), ModelError> {
        if self.adam_m.len() != self.params.len() || self.adam_v.len() != self.params.len() {
            return Err(ModelError::Shape(format!(
                "optimizer moments ({}, {}) do not match {} parameters",
                self.adam_m.len(),
                self.adam_v.len(),
                self.params.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{0}")]
    EmptyInput(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sample has no fused grid attached")]
    MissingFused,
    #[error(transparent)]
    Core(#[from] bivo_core::CoreError),
    #[error(transparent)]
    Nn(#[from] bivo_nn::NnError),
}
