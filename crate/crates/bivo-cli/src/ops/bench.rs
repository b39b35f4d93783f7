//! bench: per-cycle plan() latency per mode on a fixed synthetic workload.
//!
//! Models are random-initialized from the seed; latency does not depend on
//! trained weights, so bench needs no checkpoints. Timings are the one
//! output exempt from determinism.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bivo_models::{DriverSensorModel, OcclusionGenModel};
use bivo_planner::{plan, PlannerModels};
use bivo_sim::{generate_scene, TemplateKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ops::derive_seed;

pub struct BenchSummary {
    pub text: String,
    pub json_path: PathBuf,
}

fn quantiles_ms(mut secs: Vec<f64>) -> (f64, f64) {
    secs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = secs.len();
    let median = if n % 2 == 1 {
        secs[n / 2]
    } else {
        0.5 * (secs[n / 2 - 1] + secs[n / 2])
    };
    let p95 = secs[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
    (median * 1e3, p95 * 1e3)
}

pub fn run(cfg: &RunConfig) -> Result<BenchSummary, CliError> {
    // A busy occlusion scene: representative agent count and a hidden
    // crosser, so every mode pays its full prediction cost.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "bench", 0));
    let scene = generate_scene(&cfg.template(TemplateKind::OccludingTruckCrossing), &mut rng);
    let step = cfg.grid_t_past.max(4);

    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "bench-init", 0));
    let models = PlannerModels {
        driver_sensor: Some(DriverSensorModel::init(cfg.ds_model_config(), &mut init_rng)),
        generator: Some(OcclusionGenModel::init(cfg.gen_model_config(), &mut init_rng)),
    };
    let planner = cfg.planner_config();

    let mut text = String::new();
    let mut mode_rows = Vec::new();
    for &mode in &cfg.replay_modes {
        let mut secs = Vec::with_capacity(cfg.bench_iters);
        for i in 0..cfg.bench_iters {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "bench-cycle", i as u64));
            let t0 = Instant::now();
            let result = plan(&scene, step, mode, &models, &planner, &mut rng)?;
            secs.push(t0.elapsed().as_secs_f64());
            std::hint::black_box(result.chosen_index);
        }
        let (median_ms, p95_ms) = quantiles_ms(secs);
        text.push_str(&format!(
            "{:<24} median {median_ms:9.3} ms   p95 {p95_ms:9.3} ms\n",
            mode.as_str()
        ));
        mode_rows.push(json!({
            "mode": mode.as_str(),
            "median_ms": median_ms,
            "p95_ms": p95_ms,
        }));
    }

    std::fs::create_dir_all(&cfg.reports_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.reports_dir)))?;
    let json_path = Path::new(&cfg.reports_dir).join("bench.json");
    let payload = json!({
        "workload": {
            "scene_kind": TemplateKind::OccludingTruckCrossing.as_str(),
            "agents": scene.agents.len(),
            "step": step,
            "j": cfg.planner_j,
            "k": cfg.planner_k,
            "grid_side": cfg.grid_ego_side,
            "horizon_steps": cfg.planner_horizon_steps,
            "iters": cfg.bench_iters,
        },
        "modes": mode_rows,
    });
    let mut out = serde_json::to_string_pretty(&payload)?;
    out.push('\n');
    std::fs::write(&json_path, out)?;

    let workload_line = format!(
        "workload: j={} k={} agents={} grid={} horizon={} iters={}\n",
        cfg.planner_j,
        cfg.planner_k,
        scene.agents.len(),
        cfg.grid_ego_side,
        cfg.planner_horizon_steps,
        cfg.bench_iters
    );
    Ok(BenchSummary {
        text: workload_line + &text,
        json_path,
    })
}
