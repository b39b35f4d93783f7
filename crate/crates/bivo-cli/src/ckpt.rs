//! Training checkpoints: model config, parameters, Adam moments, step count.
//!
//! The blob is `params ++ adam_m ++ adam_v` (three equal-length runs), so a
//! checkpoint can resume training exactly where it stopped. The descriptor
//! records the stage, the model config and the step counter.

use std::path::Path;

use bivo_models::{
    DriverSensorModel, DsConfig, GenConfig, OcclusionGenModel, TrainState,
};
use bivo_nn::{load_checkpoint, save_checkpoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::CliError;

pub const STAGE_DS: &str = "driversensor";
pub const STAGE_GEN: &str = "generator";

fn state_blob(state: &TrainState) -> Vec<f64> {
    let mut blob = Vec::with_capacity(3 * state.params.len());
    blob.extend_from_slice(&state.params);
    blob.extend_from_slice(&state.adam_m);
    blob.extend_from_slice(&state.adam_v);
    blob
}

fn split_blob(desc: &Value, blob: Vec<f64>, path: &Path) -> Result<TrainState, CliError> {
    let n = desc
        .get("params")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CliError::Data(format!("{}: descriptor missing params", path.display())))?
        as usize;
    let step = desc
        .get("step")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| CliError::Data(format!("{}: descriptor missing step", path.display())))?
        as usize;
    if blob.len() != 3 * n {
        return Err(CliError::Data(format!(
            "{}: expected {} values (params + two moment vectors), found {}",
            path.display(),
            3 * n,
            blob.len()
        )));
    }
    let mut params = blob;
    let adam_v = params.split_off(2 * n);
    let adam_m = params.split_off(n);
    Ok(TrainState { params, adam_m, adam_v, step })
}

fn check_stage(desc: &Value, want: &str, path: &Path) -> Result<(), CliError> {
    match desc.get("stage").and_then(|v| v.as_str()) {
        Some(s) if s == want => Ok(()),
        Some(s) => Err(CliError::Data(format!(
            "{}: checkpoint stage is {s:?}, expected {want:?}",
            path.display()
        ))),
        None => Err(CliError::Data(format!(
            "{}: descriptor missing stage",
            path.display()
        ))),
    }
}

pub fn save_ds_checkpoint(
    path: &Path,
    cfg: &DsConfig,
    state: &TrainState,
) -> Result<(), CliError> {
    let desc = json!({
        "stage": STAGE_DS,
        "model": {
            "classes": cfg.classes,
            "hidden": cfg.hidden,
            "history_dim": cfg.history_dim,
            "grid_side": cfg.grid_side,
        },
        "step": state.step,
        "params": state.params.len(),
    });
    save_checkpoint(path, &desc, &state_blob(state))?;
    Ok(())
}

pub fn load_ds_checkpoint(path: &Path) -> Result<(DriverSensorModel, TrainState), CliError> {
    let (desc, blob) = load_checkpoint(path)?;
    check_stage(&desc, STAGE_DS, path)?;
    let model_desc = desc
        .get("model")
        .ok_or_else(|| CliError::Data(format!("{}: descriptor missing model", path.display())))?;
    let get = |k: &str| -> Result<usize, CliError> {
        model_desc
            .get(k)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| CliError::Data(format!("{}: model descriptor missing {k}", path.display())))
    };
    let cfg = DsConfig {
        classes: get("classes")?,
        hidden: get("hidden")?,
        history_dim: get("history_dim")?,
        grid_side: get("grid_side")?,
    };
    let state = split_blob(&desc, blob, path)?;
    let mut model = DriverSensorModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(0));
    model
        .set_params(&state.params)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((model, state))
}

pub fn save_gen_checkpoint(
    path: &Path,
    cfg: &GenConfig,
    state: &TrainState,
) -> Result<(), CliError> {
    let desc = json!({
        "stage": STAGE_GEN,
        "model": {
            "d_z": cfg.d_z,
            "horizon": cfg.horizon,
            "grid_side": cfg.grid_side,
            "downsample": cfg.downsample,
            "h1": cfg.h1,
            "h2": cfg.h2,
            "zero_condition": cfg.zero_condition,
        },
        "step": state.step,
        "params": state.params.len(),
    });
    save_checkpoint(path, &desc, &state_blob(state))?;
    Ok(())
}

pub fn load_gen_checkpoint(path: &Path) -> Result<(OcclusionGenModel, TrainState), CliError> {
    let (desc, blob) = load_checkpoint(path)?;
    check_stage(&desc, STAGE_GEN, path)?;
    let model_desc = desc
        .get("model")
        .ok_or_else(|| CliError::Data(format!("{}: descriptor missing model", path.display())))?;
    let get = |k: &str| -> Result<usize, CliError> {
        model_desc
            .get(k)
            .and_then(|v| v.as_u64())
            .map(|v| v as usize)
            .ok_or_else(|| CliError::Data(format!("{}: model descriptor missing {k}", path.display())))
    };
    let cfg = GenConfig {
        d_z: get("d_z")?,
        horizon: get("horizon")?,
        grid_side: get("grid_side")?,
        downsample: get("downsample")?,
        h1: get("h1")?,
        h2: get("h2")?,
        zero_condition: model_desc
            .get("zero_condition")
            .and_then(|v| v.as_bool())
            .ok_or_else(|| {
                CliError::Data(format!("{}: model descriptor missing zero_condition", path.display()))
            })?,
    };
    let state = split_blob(&desc, blob, path)?;
    let mut model = OcclusionGenModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(0));
    model
        .set_params(&state.params)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((model, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn fake_state(n: usize, seed: u64) -> TrainState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TrainState {
            params: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            adam_m: (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            adam_v: (0..n).map(|_| rng.gen_range(0.0..0.01)).collect(),
            step: 17,
        }
    }

    #[test]
    fn ds_round_trip_preserves_state_and_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.ckpt");
        let cfg = DsConfig { classes: 4, hidden: 8, history_dim: 10, grid_side: 5 };
        let model = DriverSensorModel::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3));
        let mut state = fake_state(model.param_count(), 1);
        state.params = model.params();
        save_ds_checkpoint(&path, &cfg, &state).unwrap();
        let (back, back_state) = load_ds_checkpoint(&path).unwrap();
        assert_eq!(back.cfg, cfg);
        assert_eq!(back_state, state);
        assert_eq!(back.params(), model.params());
    }

    #[test]
    fn gen_round_trip_preserves_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.ckpt");
        let cfg = GenConfig {
            d_z: 3,
            horizon: 4,
            grid_side: 8,
            downsample: 2,
            h1: 8,
            h2: 6,
            zero_condition: true,
        };
        let model = OcclusionGenModel::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(9));
        let mut state = fake_state(model.param_count(), 2);
        state.params = model.params();
        save_gen_checkpoint(&path, &cfg, &state).unwrap();
        let (back, back_state) = load_gen_checkpoint(&path).unwrap();
        assert_eq!(back.cfg, cfg);
        assert_eq!(back_state, state);
    }

    #[test]
    fn wrong_stage_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.ckpt");
        let cfg = DsConfig { classes: 4, hidden: 8, history_dim: 10, grid_side: 5 };
        let model = DriverSensorModel::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3));
        let mut state = fake_state(model.param_count(), 1);
        state.params = model.params();
        save_ds_checkpoint(&path, &cfg, &state).unwrap();
        let err = load_gen_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
