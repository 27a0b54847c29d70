//! Optional on-disk cache for object distance grids, enabled by setting
//! `GRASPSYNTH_CACHE_DIR`. Entries are keyed by the mesh file's content hash
//! and the grid spacing, so edits to the mesh or a different resolution never
//! alias.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use graspsynth::geometry::{GridBuildParams, Mesh, SdfGrid};

pub const CACHE_ENV: &str = "GRASPSYNTH_CACHE_DIR";

fn cache_path(dir: &Path, mesh_bytes: &[u8], spacing: f64) -> PathBuf {
    let mut hasher = Sha256::new();
    hasher.update(mesh_bytes);
    hasher.update(spacing.to_le_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(32);
    for b in &digest[..16] {
        hex.push_str(&format!("{b:02x}"));
    }
    dir.join(format!("{hex}.sdfgrid"))
}

/// Returns the distance grid for `mesh` (loaded from `mesh_path`), consulting
/// the cache when `GRASPSYNTH_CACHE_DIR` is set. The `bool` reports a cache
/// hit. Cache read/write problems degrade to a rebuild, never to an error.
pub fn grid_for_mesh(
    mesh_path: &Path,
    mesh: &Mesh,
    spacing: f64,
) -> graspsynth::Result<(SdfGrid, bool)> {
    let params = GridBuildParams::with_spacing(spacing);
    let dir = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    let entry = match &dir {
        Some(dir) => match std::fs::read(mesh_path) {
            Ok(bytes) => Some(cache_path(dir, &bytes, spacing)),
            Err(_) => None,
        },
        None => None,
    };

    if let Some(path) = &entry {
        if path.exists() {
            match SdfGrid::load(path) {
                Ok(grid) if (grid.spacing() - spacing).abs() < 1e-12 => {
                    return Ok((grid, true));
                }
                Ok(_) => eprintln!(
                    "warning: cache entry {} has stale spacing; rebuilding",
                    path.display()
                ),
                Err(e) => eprintln!(
                    "warning: unreadable cache entry {}: {e}; rebuilding",
                    path.display()
                ),
            }
        }
    }

    let (grid, _report) = SdfGrid::build(mesh, &params)?;
    if let (Some(dir), Some(path)) = (&dir, &entry) {
        if std::fs::create_dir_all(dir).is_ok() {
            if let Err(e) = grid.save(path) {
                eprintln!("warning: could not write cache entry {}: {e}", path.display());
            }
        }
    }
    Ok((grid, false))
}
