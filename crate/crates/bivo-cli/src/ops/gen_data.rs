//! gen-data: sample scenes from the template mix and write them plus a
//! manifest. Fixed seed means byte-identical files, including the manifest.

use std::path::{Path, PathBuf};

use bivo_sim::{generate_scene, save_scene, TemplateKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ops::derive_seed;

pub struct GenDataSummary {
    pub count: usize,
    pub dir: PathBuf,
    pub manifest: PathBuf,
}

/// Cumulative-weight draw. Weights are nonnegative with a positive sum
/// (validated at config time).
fn pick_kind(mix: &[(TemplateKind, f64)], rng: &mut impl Rng) -> TemplateKind {
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (kind, w) in mix {
        acc += w;
        if u < acc {
            return *kind;
        }
    }
    mix.last().expect("mix is nonempty").0
}

pub fn run(cfg: &RunConfig) -> Result<GenDataSummary, CliError> {
    let dir = Path::new(&cfg.scenes_dir);
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;

    let mut entries = Vec::with_capacity(cfg.gen_count);
    for i in 0..cfg.gen_count {
        // One rng per scene: scene i never depends on how many came before.
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "gen", i as u64));
        let kind = pick_kind(&cfg.gen_mix, &mut rng);
        let scene = generate_scene(&cfg.template(kind), &mut rng);
        let file = format!("{i:05}_{}.json", scene.id);
        save_scene(&dir.join(&file), &scene)
            .map_err(|e| CliError::Data(format!("cannot write scene {file}: {e}")))?;
        entries.push(json!({
            "file": file,
            "id": scene.id,
            "kind": kind.as_str(),
        }));
    }

    let manifest = json!({
        "seed": cfg.seed,
        "count": cfg.gen_count,
        "mix": cfg.get("gen.mix").expect("known key"),
        "scenes": entries,
    });
    let manifest_path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&manifest_path, text)
        .map_err(|e| CliError::Data(format!("cannot write manifest: {e}")))?;

    Ok(GenDataSummary {
        count: cfg.gen_count,
        dir: dir.to_path_buf(),
        manifest: manifest_path,
    })
}
