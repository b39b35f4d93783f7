//! render: debug imagery for one scene at one step.
//!
//! `ogm` and `fused` are P5 pixmaps straight from the grids (0 free, 128
//! occluded, 255 occupied, rows bottom-up so +y is up). `samples` and
//! `plan` are P6 overlays: the same grid underneath, trajectories on top.

use std::path::{Path, PathBuf};

use bivo_core::{build_observed_ogm, build_road_raster, AgentState, OccupancyGrid};
use bivo_models::{fuse_scene, sample_trajectories, SampleOptions};
use bivo_planner::{plan, PlannerMode, PlannerModels};
use bivo_sim::load_scene;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ckpt;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlay {
    Ogm,
    Fused,
    Samples,
    Plan,
}

impl Overlay {
    pub fn parse(s: &str) -> Result<Overlay, CliError> {
        match s {
            "ogm" => Ok(Overlay::Ogm),
            "fused" => Ok(Overlay::Fused),
            "samples" => Ok(Overlay::Samples),
            "plan" => Ok(Overlay::Plan),
            _ => Err(CliError::Config(format!(
                "overlay {s:?} is not ogm, fused, samples or plan"
            ))),
        }
    }

    pub fn parse_list(csv: &str) -> Result<Vec<Overlay>, CliError> {
        let mut overlays = Vec::new();
        for part in csv.split(',') {
            let o = Overlay::parse(part.trim())?;
            if !overlays.contains(&o) {
                overlays.push(o);
            }
        }
        Ok(overlays)
    }
}

pub struct RenderRequest {
    pub scene_path: PathBuf,
    pub step: usize,
    pub overlays: Vec<Overlay>,
    pub out_dir: PathBuf,
    pub mode: PlannerMode,
}

const COLOR_SAMPLE: [u8; 3] = [70, 100, 230];
const COLOR_CANDIDATE: [u8; 3] = [150, 190, 255];
const COLOR_PREDICTED: [u8; 3] = [230, 70, 70];
const COLOR_CHOSEN: [u8; 3] = [40, 200, 90];

/// RGB canvas over a grid, emitted bottom-up like `to_pgm`.
struct Canvas {
    grid: OccupancyGrid,
    rgb: Vec<[u8; 3]>,
}

impl Canvas {
    fn over(grid: &OccupancyGrid) -> Canvas {
        let rgb = grid
            .values
            .iter()
            .map(|v| {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g]
            })
            .collect();
        Canvas { grid: grid.clone(), rgb }
    }

    fn paint_local(&mut self, x: f64, y: f64, color: [u8; 3]) {
        if let Some((r, c)) = self.grid.cell_of_local(x, y) {
            self.rgb[r * self.grid.width + c] = color;
        }
    }

    fn paint_world(&mut self, x: f64, y: f64, color: [u8; 3]) {
        if let Some((r, c)) = self.grid.cell_of_world(x, y) {
            self.rgb[r * self.grid.width + c] = color;
        }
    }

    /// Interpolated segments between consecutive states; quarter-cell
    /// spacing keeps lines gap-free on diagonals.
    fn polyline(&mut self, states: &[AgentState], world_frame: bool, color: [u8; 3]) {
        let spacing = self.grid.resolution * 0.25;
        for pair in states.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let dist = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            let n = ((dist / spacing).ceil() as usize).max(1);
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let x = a.x + (b.x - a.x) * t;
                let y = a.y + (b.y - a.y) * t;
                if world_frame {
                    self.paint_world(x, y, color);
                } else {
                    self.paint_local(x, y, color);
                }
            }
        }
    }

    fn write_ppm(&self, path: &Path) -> Result<(), CliError> {
        let (h, w) = (self.grid.height, self.grid.width);
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for r in (0..h).rev() {
            for c in 0..w {
                out.extend_from_slice(&self.rgb[r * w + c]);
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn needs_models(overlays: &[Overlay], mode: PlannerMode) -> (bool, bool) {
    let mut ds = false;
    let mut gen = false;
    for o in overlays {
        match o {
            Overlay::Ogm => {}
            Overlay::Fused => ds = true,
            Overlay::Samples => {
                ds = true;
                gen = true;
            }
            Overlay::Plan => match mode {
                PlannerMode::Bivo => {
                    ds = true;
                    gen = true;
                }
                PlannerMode::CvaeOnly => gen = true,
                PlannerMode::DriverSensorHeuristic => ds = true,
                PlannerMode::NoReasoning | PlannerMode::Oracle => {}
            },
        }
    }
    (ds, gen)
}

pub fn run(cfg: &RunConfig, req: &RenderRequest) -> Result<Vec<PathBuf>, CliError> {
    let scene = load_scene(&req.scene_path)?;
    let step = req.step;
    if scene.ego.state_at(step).is_none() {
        return Err(CliError::Data(format!(
            "step {step} is outside the ego recording of scene {}",
            scene.id
        )));
    }
    std::fs::create_dir_all(&req.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", req.out_dir.display())))?;

    let (needs_ds, needs_gen) = needs_models(&req.overlays, req.mode);
    let ckpt_dir = Path::new(&cfg.checkpoints_dir);
    let ds_model = if needs_ds {
        let path = ckpt_dir.join("driver_sensor.ckpt");
        if !path.exists() {
            return Err(CliError::Ordering(format!(
                "{} not found; run train --stage driversensor first",
                path.display()
            )));
        }
        Some(ckpt::load_ds_checkpoint(&path)?.0)
    } else {
        None
    };
    let gen_model = if needs_gen {
        let path = ckpt_dir.join("generator.ckpt");
        if !path.exists() {
            return Err(CliError::Ordering(format!(
                "{} not found; run train --stage generator first",
                path.display()
            )));
        }
        Some(ckpt::load_gen_checkpoint(&path)?.0)
    } else {
        None
    };

    let side = cfg.grid_ego_side;
    let res = cfg.grid_resolution;
    let mining = cfg.mining();
    let stem = format!("{}_step{}", scene.id, step);
    let mut written = Vec::new();

    for overlay in &req.overlays {
        match overlay {
            Overlay::Ogm => {
                let grid = build_observed_ogm(&scene, step, &scene.ego.id, side, side, res)?;
                let path = req.out_dir.join(format!("{stem}_ogm.pgm"));
                std::fs::write(&path, grid.to_pgm())?;
                written.push(path);
            }
            Overlay::Fused => {
                let ds = ds_model.as_ref().expect("loaded above");
                let fused = fuse_scene(ds, &scene, step, &mining)?;
                let path = req.out_dir.join(format!("{stem}_fused.pgm"));
                std::fs::write(&path, fused.fused.to_pgm())?;
                written.push(path);
            }
            Overlay::Samples => {
                let ds = ds_model.as_ref().expect("loaded above");
                let gen = gen_model.as_ref().expect("loaded above");
                let fused = fuse_scene(ds, &scene, step, &mining)?;
                let ego_state = *scene.ego.state_at(step).expect("checked above");
                let road = build_road_raster(&scene, ego_state, side, side, res);
                let opts = SampleOptions {
                    force_standard_normal: cfg.planner_force_standard_normal,
                    start_step: step,
                    dt: scene.dt(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let samples = sample_trajectories(
                    gen,
                    &road,
                    &fused.fused,
                    &fused.observed,
                    &ego_state,
                    cfg.planner_k,
                    cfg.planner_pi_e,
                    &cfg.limits(),
                    &opts,
                    &mut rng,
                )?;
                // Sampled futures live in the ego frame at `step`, which is
                // exactly the fused grid's own frame.
                let mut canvas = Canvas::over(&fused.fused);
                for s in &samples {
                    canvas.polyline(&s.trajectory.states, false, COLOR_SAMPLE);
                }
                let path = req.out_dir.join(format!("{stem}_samples.ppm"));
                canvas.write_ppm(&path)?;
                written.push(path);
            }
            Overlay::Plan => {
                let models = PlannerModels {
                    driver_sensor: ds_model.clone(),
                    generator: gen_model.clone(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let result = plan(&scene, step, req.mode, &models, &cfg.planner_config(), &mut rng)?;
                let observed = build_observed_ogm(&scene, step, &scene.ego.id, side, side, res)?;
                let mut canvas = Canvas::over(&observed);
                for (cand, _) in &result.candidates {
                    canvas.polyline(&cand.states, true, COLOR_CANDIDATE);
                }
                for p in &result.predicted {
                    canvas.polyline(&p.trajectory.states, true, COLOR_PREDICTED);
                }
                canvas.polyline(&result.chosen.states, true, COLOR_CHOSEN);
                let path = req.out_dir.join(format!("{stem}_plan_{}.ppm", req.mode.as_str()));
                canvas.write_ppm(&path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
