pub mod bench;
pub mod eval;
pub mod gen_data;
pub mod render;
pub mod train;

use std::path::{Path, PathBuf};

use bivo_core::Scene;
use bivo_sim::load_scene;

use crate::error::CliError;

/// FNV-1a over a seed, a command tag and an index: stable per-item seeds
/// that do not collide across commands.
pub(crate) fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(&base.to_le_bytes());
    eat(tag.as_bytes());
    eat(&index.to_le_bytes());
    h
}

/// Every scene JSON in the directory, in filename order. The manifest is
/// skipped. An empty result means gen-data has not produced anything here.
pub(crate) fn load_scenes_sorted(dir: &str) -> Result<Vec<Scene>, CliError> {
    let dir = Path::new(dir);
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("scenes dir {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".json") && name != "manifest.json" {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Ordering(format!(
            "no scenes in {}; run gen-data first",
            dir.display()
        )));
    }
    let mut scenes = Vec::with_capacity(paths.len());
    for path in &paths {
        scenes.push(load_scene(path)?);
    }
    Ok(scenes)
}
