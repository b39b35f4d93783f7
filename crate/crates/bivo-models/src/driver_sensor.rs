//! Per-agent grid-reconstructing CVAE with a discrete latent.
//!
//! Each visible agent's recent motion (T_past states in its own frame) is
//! evidence about its surroundings. The model encodes that history, infers a
//! categorical latent (prior from history alone, posterior also seeing the
//! true grid), and decodes per-cell Bernoulli logits over the agent-centered
//! grid. Training relaxes the latent with Gumbel-softmax; evaluation takes
//! the prior's argmax class.

use bivo_core::{
    agent_occluded_from_ego, build_ground_truth_ogm, point_to_frame, to_ego_frame, Agent,
    AgentState, OccupancyGrid, Scene,
};
use bivo_nn::{
    argmax_one_hot, bce_with_logits, bce_with_logits_grad, entropy, load_checkpoint, log_softmax,
    save_checkpoint, Activation, Adam, Mlp, MlpSpec,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::Path;

use crate::params;
use crate::ModelError;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsConfig {
    /// Latent classes C.
    pub classes: usize,
    pub hidden: usize,
    /// Flattened history width (T_past states x 5 features).
    pub history_dim: usize,
    /// Agent grid side length in cells.
    pub grid_side: usize,
}

impl Default for DsConfig {
    fn default() -> Self {
        DsConfig {
            classes: 32,
            hidden: 128,
            history_dim: bivo_core::PAST_STEPS * 5,
            grid_side: bivo_core::AGENT_GRID_SIZE,
        }
    }
}

impl DsConfig {
    pub fn grid_cells(&self) -> usize {
        self.grid_side * self.grid_side
    }
}

/// One training pair: agent-frame history and the binary ground-truth grid.
#[derive(Debug, Clone)]
pub struct DsPair {
    pub history: Vec<f64>,
    /// Row-major {0, 1} cells, stored compactly.
    pub m_gt: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct DriverSensorModel {
    pub cfg: DsConfig,
    /// History encoder: history -> shared features.
    pub trunk: Mlp,
    /// Features -> C prior logits.
    pub prior: Mlp,
    /// Features ++ flattened grid -> C posterior logits.
    pub posterior: Mlp,
    /// Latent class (relaxed one-hot) -> per-cell Bernoulli logits.
    pub decoder: Mlp,
}

impl DriverSensorModel {
    pub fn init(cfg: DsConfig, rng: &mut impl Rng) -> DriverSensorModel {
        let h = cfg.hidden;
        let c = cfg.classes;
        let cells = cfg.grid_cells();
        let trunk = Mlp::init(
            MlpSpec::with_acts(vec![cfg.history_dim, h, h], Activation::Relu, Activation::Relu).unwrap(),
            rng,
        );
        let prior = Mlp::init(
            MlpSpec::with_acts(vec![h, c], Activation::Relu, Activation::Identity).unwrap(),
            rng,
        );
        let posterior = Mlp::init(
            MlpSpec::with_acts(vec![h + cells, h, c], Activation::Relu, Activation::Identity).unwrap(),
            rng,
        );
        let decoder = Mlp::init(
            MlpSpec::with_acts(vec![c, h, h, cells], Activation::Relu, Activation::Identity).unwrap(),
            rng,
        );
        DriverSensorModel {
            cfg,
            trunk,
            prior,
            posterior,
            decoder,
        }
    }

    pub fn param_count(&self) -> usize {
        self.trunk.params.len() + self.prior.params.len() + self.posterior.params.len() + self.decoder.params.len()
    }

    pub fn params(&self) -> Vec<f64> {
        params::flatten(&[&self.trunk, &self.prior, &self.posterior, &self.decoder])
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        params::scatter(
            &mut [&mut self.trunk, &mut self.prior, &mut self.posterior, &mut self.decoder],
            flat,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let desc = json!({
            "kind": "driver_sensor",
            "classes": self.cfg.classes,
            "hidden": self.cfg.hidden,
            "history_dim": self.cfg.history_dim,
            "grid_side": self.cfg.grid_side,
        });
        save_checkpoint(path, &desc, &self.params())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DriverSensorModel, ModelError> {
        let (desc, flat) = load_checkpoint(path)?;
        let get = |k: &str| -> Result<usize, ModelError> {
            desc.get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| ModelError::Shape(format!("checkpoint descriptor missing {k}")))
        };
        if desc.get("kind").and_then(|v| v.as_str()) != Some("driver_sensor") {
            return Err(ModelError::Shape("checkpoint is not a driver_sensor model".into()));
        }
        let cfg = DsConfig {
            classes: get("classes")?,
            hidden: get("hidden")?,
            history_dim: get("history_dim")?,
            grid_side: get("grid_side")?,
        };
        let mut model = DriverSensorModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(0));
        model.set_params(&flat)?;
        Ok(model)
    }
}

/// Loss components; `total` always equals
/// `reconstruction_nll + beta*kl - mutual_information + (1-beta)*batch_entropy`.
#[derive(Debug, Clone, Copy)]
pub struct DsLossBreakdown {
    pub reconstruction_nll: f64,
    pub kl: f64,
    pub mutual_information: f64,
    pub batch_entropy: f64,
    pub beta: f64,
    pub total: f64,
}

struct DsForward {
    breakdown: DsLossBreakdown,
    /// Latent classes with batch-mean posterior mass > 1/(10C).
    active_classes: usize,
    grads: Option<Vec<f64>>,
}

/// Forward (and optionally backward) pass of the stage-one loss.
///
/// `histories` is `batch` rows of `history_dim`; `targets` is `batch` rows of
/// grid cells in [0,1]. One Gumbel-softmax sample per item (temperature
/// `temp`) drives the reconstruction term; KL, mutual information, and batch
/// entropy come from the exact categorical posteriors.
fn ds_pass(
    model: &DriverSensorModel,
    histories: &[f64],
    targets: &[f64],
    batch: usize,
    beta: f64,
    temp: f64,
    rng: &mut impl Rng,
    want_grad: bool,
) -> Result<DsForward, ModelError> {
    if batch < 2 {
        return Err(ModelError::EmptyInput("ds_loss needs a batch of at least 2"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(ModelError::Shape(format!("beta {beta} outside [0,1]")));
    }
    if temp <= 0.0 {
        return Err(ModelError::Shape(format!("temperature {temp} must be positive")));
    }
    let c = model.cfg.classes;
    let cells = model.cfg.grid_cells();
    let hd = model.cfg.history_dim;
    let h = model.cfg.hidden;
    if histories.len() != batch * hd {
        return Err(ModelError::Shape(format!(
            "histories: have {} values, want {batch} x {hd}",
            histories.len()
        )));
    }
    if targets.len() != batch * cells {
        return Err(ModelError::Shape(format!(
            "targets: have {} values, want {batch} x {cells}",
            targets.len()
        )));
    }
    let inv_b = 1.0 / batch as f64;

    let (feat, trunk_cache) = model.trunk.forward_cached(histories, batch)?;
    let (prior_logits, prior_cache) = model.prior.forward_cached(&feat, batch)?;
    let mut post_in = vec![0.0; batch * (h + cells)];
    for i in 0..batch {
        post_in[i * (h + cells)..i * (h + cells) + h].copy_from_slice(&feat[i * h..(i + 1) * h]);
        post_in[i * (h + cells) + h..(i + 1) * (h + cells)]
            .copy_from_slice(&targets[i * cells..(i + 1) * cells]);
    }
    let (post_logits, post_cache) = model.posterior.forward_cached(&post_in, batch)?;

    // Exact posteriors/priors in log space, plus one relaxed sample per item.
    let mut log_q = vec![0.0; batch * c];
    let mut log_p = vec![0.0; batch * c];
    let mut q = vec![0.0; batch * c];
    let mut y = vec![0.0; batch * c];
    for i in 0..batch {
        let lq = log_softmax(&post_logits[i * c..(i + 1) * c]);
        let lp = log_softmax(&prior_logits[i * c..(i + 1) * c]);
        for j in 0..c {
            log_q[i * c + j] = lq[j];
            log_p[i * c + j] = lp[j];
            q[i * c + j] = lq[j].exp();
        }
        // Gumbel-perturbed relaxation; draws are per-item, fixed count.
        let mut s = vec![0.0; c];
        for j in 0..c {
            let u: f64 = rng.gen::<f64>().max(1e-12);
            let g = -(-u.ln()).ln();
            s[j] = (post_logits[i * c + j] + g) / temp;
        }
        let sm = bivo_nn::softmax(&s);
        y[i * c..(i + 1) * c].copy_from_slice(&sm);
    }

    let (recon_logits, dec_cache) = model.decoder.forward_cached(&y, batch)?;

    let mut recon = 0.0;
    for (r, m) in recon_logits.iter().zip(targets.iter()) {
        recon += bce_with_logits(*r, *m);
    }
    recon *= inv_b;

    let mut kl = 0.0;
    let mut kl_i = vec![0.0; batch];
    let mut h_i = vec![0.0; batch];
    let mut q_bar = vec![0.0; c];
    for i in 0..batch {
        let mut k = 0.0;
        let mut ent = 0.0;
        for j in 0..c {
            let qj = q[i * c + j];
            k += qj * (log_q[i * c + j] - log_p[i * c + j]);
            ent -= qj * log_q[i * c + j];
            q_bar[j] += qj * inv_b;
        }
        kl_i[i] = k;
        h_i[i] = ent;
        kl += k * inv_b;
    }
    let h_bar = entropy(&q_bar);
    let mean_h = h_i.iter().sum::<f64>() * inv_b;
    let mutual_information = h_bar - mean_h;
    let batch_entropy = h_bar;
    let total = recon + beta * kl - mutual_information + (1.0 - beta) * batch_entropy;
    let breakdown = DsLossBreakdown {
        reconstruction_nll: recon,
        kl,
        mutual_information,
        batch_entropy,
        beta,
        total,
    };
    let active_classes = q_bar.iter().filter(|&&m| m > 1.0 / (10.0 * c as f64)).count();

    if !want_grad {
        return Ok(DsForward {
            breakdown,
            active_classes,
            grads: None,
        });
    }

    // Reconstruction path: through the decoder and the Gumbel softmax.
    let mut d_recon = vec![0.0; batch * cells];
    for (d, (r, m)) in d_recon.iter_mut().zip(recon_logits.iter().zip(targets.iter())) {
        *d = bce_with_logits_grad(*r, *m) * inv_b;
    }
    let (dec_grads, dy) = model.decoder.backward(&dec_cache, &d_recon);

    // Total gradient on the posterior logits. The loss rearranges to
    // recon + beta*kl + mean_i H(q_i) - beta*H(q_bar), which is what the
    // closed-form softmax jacobians below implement.
    let mut d_lq = vec![0.0; batch * c];
    let v: Vec<f64> = q_bar.iter().map(|&m| -(m.ln() + 1.0)).collect();
    for i in 0..batch {
        let yi = &y[i * c..(i + 1) * c];
        let dyi = &dy[i * c..(i + 1) * c];
        let dot: f64 = yi.iter().zip(dyi).map(|(a, b)| a * b).sum();
        let qi = &q[i * c..(i + 1) * c];
        let v_dot: f64 = v.iter().zip(qi).map(|(a, b)| a * b).sum();
        for j in 0..c {
            let idx = i * c + j;
            // Gumbel relaxation: d s / d logits = 1/temp.
            let g_recon = yi[j] * (dyi[j] - dot) / temp;
            let g_kl = beta * inv_b * qi[j] * (log_q[idx] - log_p[idx] - kl_i[i]);
            let g_mean_h = -inv_b * qi[j] * (log_q[idx] + h_i[i]);
            let g_hbar = inv_b * qi[j] * (v[j] - v_dot);
            d_lq[idx] = g_recon + g_kl + g_mean_h - beta * g_hbar;
        }
    }
    // Prior logits only feel the KL term.
    let mut d_lp = vec![0.0; batch * c];
    for i in 0..batch {
        for j in 0..c {
            let idx = i * c + j;
            d_lp[idx] = beta * inv_b * (log_p[idx].exp() - q[idx]);
        }
    }

    let (post_grads, d_post_in) = model.posterior.backward(&post_cache, &d_lq);
    let (prior_grads, d_feat_prior) = model.prior.backward(&prior_cache, &d_lp);
    let mut d_feat = d_feat_prior;
    for i in 0..batch {
        for j in 0..h {
            d_feat[i * h + j] += d_post_in[i * (h + cells) + j];
        }
    }
    let (trunk_grads, _) = model.trunk.backward(&trunk_cache, &d_feat);

    let mut grads = Vec::with_capacity(model.param_count());
    grads.extend_from_slice(&trunk_grads);
    grads.extend_from_slice(&prior_grads);
    grads.extend_from_slice(&post_grads);
    grads.extend_from_slice(&dec_grads);
    Ok(DsForward {
        breakdown,
        active_classes,
        grads: Some(grads),
    })
}

/// Stage-one loss on a prepared batch. See [`ds_loss_grad`] for training.
pub fn ds_loss(
    model: &DriverSensorModel,
    histories: &[f64],
    targets: &[f64],
    batch: usize,
    beta: f64,
    temp: f64,
    rng: &mut impl Rng,
) -> Result<DsLossBreakdown, ModelError> {
    Ok(ds_pass(model, histories, targets, batch, beta, temp, rng, false)?.breakdown)
}

/// Loss plus the gradient of `total` with respect to the flat parameters.
pub fn ds_loss_grad(
    model: &DriverSensorModel,
    histories: &[f64],
    targets: &[f64],
    batch: usize,
    beta: f64,
    temp: f64,
    rng: &mut impl Rng,
) -> Result<(DsLossBreakdown, Vec<f64>), ModelError> {
    let out = ds_pass(model, histories, targets, batch, beta, temp, rng, true)?;
    Ok((out.breakdown, out.grads.expect("gradient requested")))
}

/// Per-cell occupancy probabilities for the prior's most likely latent class.
pub fn reconstruct_probs(model: &DriverSensorModel, history: &[f64]) -> Result<Vec<f64>, ModelError> {
    let feat = model.trunk.forward_batch(history, 1)?;
    let prior_logits = model.prior.forward_batch(&feat, 1)?;
    let one_hot = argmax_one_hot(&prior_logits);
    let logits = model.decoder.forward_batch(&one_hot, 1)?;
    Ok(logits.iter().map(|&r| bivo_nn::sigmoid(r)).collect())
}

/// [`reconstruct_probs`] laid out as a grid anchored at the agent's pose.
pub fn reconstruct_most_likely(
    model: &DriverSensorModel,
    history: &[f64],
    agent_pose: AgentState,
    resolution: f64,
) -> Result<OccupancyGrid, ModelError> {
    let side = model.cfg.grid_side;
    let values = reconstruct_probs(model, history)?;
    Ok(OccupancyGrid {
        center_pose: agent_pose,
        resolution,
        height: side,
        width: side,
        values,
    })
}

/// Agent-frame history features for the `t_past` steps ending at `step`:
/// per step (x, y, heading, speed, accel) in the frame of the state at
/// `step`. None when the trajectory does not cover the window.
pub fn history_features(agent: &Agent, step: usize, t_past: usize) -> Option<Vec<f64>> {
    if step + 1 < t_past {
        return None;
    }
    let window = agent.trajectory.window(step + 1 - t_past, t_past)?;
    let now = *window.last().unwrap();
    let mut out = Vec::with_capacity(t_past * 5);
    for s in window {
        let local = to_ego_frame(s, &now);
        out.extend_from_slice(&[local.x, local.y, local.heading, local.speed, local.accel]);
    }
    Some(out)
}

/// True when the agent sits inside the ego-centered grid at `step`.
fn within_ego_grid(scene: &Scene, step: usize, agent: &Agent, side: usize, resolution: f64) -> bool {
    let (Some(ego), Some(pos)) = (scene.ego.state_at(step), agent.state_at(step)) else {
        return false;
    };
    let (lx, ly) = point_to_frame(pos.x, pos.y, ego);
    let half = (side / 2) as f64;
    let c = (lx / resolution).floor() + half;
    let r = (ly / resolution).floor() + half;
    r >= 0.0 && c >= 0.0 && r < side as f64 && c < side as f64
}

/// Mining configuration for stage-one training pairs and fusion sources.
#[derive(Debug, Clone, Copy)]
pub struct MiningConfig {
    pub t_past: usize,
    pub agent_grid_side: usize,
    pub ego_grid_side: usize,
    pub resolution: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            t_past: bivo_core::PAST_STEPS,
            agent_grid_side: bivo_core::AGENT_GRID_SIZE,
            ego_grid_side: bivo_core::EGO_GRID_SIZE,
            resolution: bivo_core::GRID_RESOLUTION,
        }
    }
}

/// Visible to the ego: inside the ego grid and not occluded once the agent's
/// own footprint is set aside. The same gate decides which agents become
/// DriverSensor training pairs, which act as fusion sources, and which count
/// as visible to the planner.
pub fn agent_visible_to_ego(
    scene: &Scene,
    step: usize,
    agent: &Agent,
    cfg: &MiningConfig,
) -> Result<bool, ModelError> {
    if !within_ego_grid(scene, step, agent, cfg.ego_grid_side, cfg.resolution) {
        return Ok(false);
    }
    let occluded = agent_occluded_from_ego(
        scene,
        step,
        &agent.id,
        cfg.ego_grid_side,
        cfg.ego_grid_side,
        cfg.resolution,
    )?;
    Ok(!occluded)
}

/// One (history, ground-truth grid) pair per timestep per non-ego agent that
/// is visible to the ego and has a full `t_past` history.
pub fn mine_driver_sensor_pairs(scene: &Scene, cfg: &MiningConfig) -> Result<Vec<DsPair>, ModelError> {
    let mut pairs = Vec::new();
    let ego_traj = &scene.ego.trajectory;
    for step in ego_traj.start_step..=ego_traj.end_step() {
        for agent in &scene.agents {
            let Some(history) = history_features(agent, step, cfg.t_past) else {
                continue;
            };
            if !agent_visible_to_ego(scene, step, agent, cfg)? {
                continue;
            }
            let gt = build_ground_truth_ogm(
                scene,
                step,
                &agent.id,
                cfg.agent_grid_side,
                cfg.agent_grid_side,
                cfg.resolution,
            )?;
            pairs.push(DsPair {
                history,
                m_gt: gt.values.iter().map(|&v| if v > 0.5 { 1 } else { 0 }).collect(),
            });
        }
    }
    Ok(pairs)
}

/// Ego observation plus every visible agent's most likely reconstruction,
/// fused into one belief grid. Returned alongside the raw observation.
pub fn fuse_scene(
    model: &DriverSensorModel,
    scene: &Scene,
    step: usize,
    cfg: &MiningConfig,
) -> Result<crate::belief::FusedScene, ModelError> {
    let observed = bivo_core::build_observed_ogm(
        scene,
        step,
        &scene.ego.id,
        cfg.ego_grid_side,
        cfg.ego_grid_side,
        cfg.resolution,
    )?;
    let mut sources = Vec::new();
    for agent in &scene.agents {
        let Some(history) = history_features(agent, step, cfg.t_past) else {
            continue;
        };
        if !agent_visible_to_ego(scene, step, agent, cfg)? {
            continue;
        }
        let pose = *agent.trajectory.state_at(step)?;
        sources.push(reconstruct_most_likely(model, &history, pose, cfg.resolution)?);
    }
    let (fused, conflicts) = crate::belief::fuse_to_ego(&observed, &sources);
    Ok(crate::belief::FusedScene {
        observed,
        fused,
        sources: sources.len(),
        conflicts,
    })
}

/// Training configuration for [`train_driver_sensor`].
#[derive(Debug, Clone, Copy)]
pub struct DsTrainConfig {
    pub model: DsConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub temp_start: f64,
    pub temp_end: f64,
}

impl Default for DsTrainConfig {
    fn default() -> Self {
        DsTrainConfig {
            model: DsConfig::default(),
            epochs: 5,
            batch_size: 64,
            lr: 3e-4,
            seed: 1,
            temp_start: 1.0,
            temp_end: 0.3,
        }
    }
}

/// One optimizer step's bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct DsTrainRecord {
    pub step: usize,
    pub breakdown: DsLossBreakdown,
    pub active_classes: usize,
}

/// A finished (segment of a) training run.
#[derive(Debug, Clone)]
pub struct DsTrainRun {
    pub model: DriverSensorModel,
    /// One record per optimizer step of this segment.
    pub records: Vec<DsTrainRecord>,
    /// Checkpointable state for continuing later.
    pub state: crate::TrainState,
}

/// Adam over shuffled minibatches; beta anneals linearly 0 -> 1 across the
/// first half of the total steps, the Gumbel temperature from `temp_start`
/// to `temp_end` across all steps. Trailing batches of size 1 are dropped
/// (the loss needs batch statistics).
pub fn train_driver_sensor(
    pairs: &[DsPair],
    cfg: &DsTrainConfig,
) -> Result<(DriverSensorModel, Vec<DsTrainRecord>), ModelError> {
    let run = train_driver_sensor_from(pairs, cfg, None)?;
    Ok((run.model, run.records))
}

/// [`train_driver_sensor`] continuing from checkpointed state. The step
/// counter and the annealing schedules pick up where the previous segment
/// stopped; `cfg.epochs` counts the additional epochs for this call, and the
/// shuffle/noise stream is reseeded from `cfg.seed` plus the start step so a
/// resumed segment does not replay the previous segment's draws.
pub fn train_driver_sensor_from(
    pairs: &[DsPair],
    cfg: &DsTrainConfig,
    resume: Option<&crate::TrainState>,
) -> Result<DsTrainRun, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyInput("training set is empty"));
    }
    let cells = cfg.model.grid_cells();
    let hd = cfg.model.history_dim;
    for (i, p) in pairs.iter().enumerate() {
        if p.history.len() != hd || p.m_gt.len() != cells {
            return Err(ModelError::Shape(format!(
                "pair {i}: history {} / grid {} does not match config {hd} / {cells}",
                p.history.len(),
                p.m_gt.len()
            )));
        }
    }
    let start = resume.map_or(0, |s| s.step);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(start as u64));
    let mut model = DriverSensorModel::init(cfg.model, &mut rng);
    if let Some(state) = resume {
        state.check()?;
        model.set_params(&state.params)?;
    }
    let mut flat = model.params();
    let mut adam = match resume {
        None => Adam::new(flat.len(), cfg.lr),
        Some(s) => Adam::from_state(cfg.lr, s.adam_m.clone(), s.adam_v.clone(), s.step as u64),
    };
    let batches_per_epoch = pairs.len().div_ceil(cfg.batch_size);
    let total_steps = (start + cfg.epochs * batches_per_epoch).max(1);
    let mut history = Vec::new();
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    let mut step = start;
    let mut hist_buf = vec![0.0; cfg.batch_size * hd];
    let mut tgt_buf = vec![0.0; cfg.batch_size * cells];
    for _ in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let b = chunk.len();
            for (row, &idx) in chunk.iter().enumerate() {
                hist_buf[row * hd..(row + 1) * hd].copy_from_slice(&pairs[idx].history);
                for (j, &cell) in pairs[idx].m_gt.iter().enumerate() {
                    tgt_buf[row * cells + j] = cell as f64;
                }
            }
            let beta = ((step as f64) / (0.5 * total_steps as f64)).min(1.0);
            let frac = step as f64 / (total_steps.max(2) - 1) as f64;
            let temp = cfg.temp_start + (cfg.temp_end - cfg.temp_start) * frac;
            let out = ds_pass(
                &model,
                &hist_buf[..b * hd],
                &tgt_buf[..b * cells],
                b,
                beta,
                temp,
                &mut rng,
                true,
            )?;
            adam.step(&mut flat, out.grads.as_ref().expect("gradient requested"));
            model.set_params(&flat)?;
            history.push(DsTrainRecord {
                step,
                breakdown: out.breakdown,
                active_classes: out.active_classes,
            });
            step += 1;
        }
    }
    let (m, v, _) = adam.state();
    let state = crate::TrainState {
        params: flat,
        adam_m: m.to_vec(),
        adam_v: v.to_vec(),
        step,
    };
    Ok(DsTrainRun { model, records: history, state })
}
