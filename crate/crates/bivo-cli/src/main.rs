use std::path::PathBuf;

use bivo_cli::config::{self, RunConfig};
use bivo_cli::error::CliError;
use bivo_cli::ops;
use bivo_planner::PlannerMode;
use clap::{Parser, Subcommand};

/// Occlusion-aware planning pipeline: generate scenes, train the two-stage
/// model, evaluate planner modes, render overlays, benchmark latency.
#[derive(Parser)]
#[command(name = "bivo", version, arg_required_else_help = true)]
struct Cli {
    /// Config file (key = value per line). Falls back to $BIVO_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set planner.k=500. Repeatable;
    /// beats the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample scenes from the template mix into paths.scenes.
    GenData {
        /// Overrides gen.count.
        #[arg(long)]
        count: Option<usize>,
        /// Overrides paths.scenes.
        #[arg(long, value_name = "DIR")]
        out: Option<String>,
    },
    /// Train one model stage and write its checkpoint and loss CSV.
    Train {
        /// driversensor or generator.
        #[arg(long)]
        stage: String,
        /// Continue from the stage's existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Replay scenes under every configured mode and write run-log + report.
    Eval {
        /// open or closed.
        #[arg(long = "loop", value_name = "KIND", default_value = "open")]
        loop_kind: String,
        /// Rebuild the report from the existing run-log, skipping replay.
        #[arg(long)]
        from_log: bool,
        /// Overrides eval.max_scenes (0 = all).
        #[arg(long)]
        max_scenes: Option<usize>,
    },
    /// Write debug imagery for one scene at one step.
    Render {
        /// Scene JSON to render.
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        /// Timestep to render at.
        #[arg(long, default_value_t = 0)]
        step: usize,
        /// Comma list from: ogm, fused, samples, plan.
        #[arg(long, default_value = "ogm")]
        overlays: String,
        /// Output directory; defaults to paths.reports.
        #[arg(long, value_name = "DIR")]
        out: Option<String>,
        /// Planner mode for the plan overlay.
        #[arg(long, default_value = "no_reasoning")]
        mode: String,
    },
    /// Measure per-cycle planning latency on a fixed synthetic workload.
    Bench {
        /// Overrides bench.iters.
        #[arg(long)]
        iters: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<PlannerMode, CliError> {
    PlannerMode::parse(s).map_err(|_| {
        let names: Vec<&str> = PlannerMode::ALL.iter().map(|m| m.as_str()).collect();
        CliError::Config(format!("mode {s:?} is not one of {}", names.join(", ")))
    })
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg: RunConfig = config::assemble(cli.config.as_deref(), &cli.set)?;
    match cli.cmd {
        Cmd::GenData { count, out } => {
            if let Some(c) = count {
                cfg.gen_count = c;
            }
            if let Some(dir) = out {
                cfg.scenes_dir = dir;
            }
            cfg.validate()?;
            let s = ops::gen_data::run(&cfg)?;
            println!(
                "wrote {} scenes and {} under {}",
                s.count,
                s.manifest.file_name().unwrap().to_string_lossy(),
                s.dir.display()
            );
        }
        Cmd::Train { stage, resume } => {
            let stage = ops::train::Stage::parse(&stage)?;
            let s = ops::train::run(&cfg, stage, resume)?;
            println!(
                "trained on {} examples: {} steps this run ({} total), final loss {:.6}",
                s.examples, s.steps, s.total_steps, s.final_loss
            );
            println!("checkpoint {}", s.checkpoint.display());
            println!("loss csv   {}", s.csv.display());
        }
        Cmd::Eval { loop_kind, from_log, max_scenes } => {
            if let Some(m) = max_scenes {
                cfg.eval_max_scenes = m;
            }
            let kind = ops::eval::parse_loop_kind(&loop_kind)?;
            let s = ops::eval::run(&cfg, kind, from_log)?;
            print!("{}", s.report.render());
            println!("{} records -> {}", s.records, s.run_log.display());
            println!("report {}", s.report_txt.display());
        }
        Cmd::Render { scene, step, overlays, out, mode } => {
            let req = ops::render::RenderRequest {
                scene_path: scene,
                step,
                overlays: ops::render::Overlay::parse_list(&overlays)?,
                out_dir: PathBuf::from(out.unwrap_or_else(|| cfg.reports_dir.clone())),
                mode: parse_mode(&mode)?,
            };
            for path in ops::render::run(&cfg, &req)? {
                println!("wrote {}", path.display());
            }
        }
        Cmd::Bench { iters } => {
            if let Some(i) = iters {
                cfg.bench_iters = i;
                cfg.validate()?;
            }
            let s = ops::bench::run(&cfg)?;
            print!("{}", s.text);
            println!("wrote {}", s.json_path.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
