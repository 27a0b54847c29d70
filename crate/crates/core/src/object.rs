//! Object model: a mesh together with its signed-distance grid and a
//! reusable surface sampling.

use std::path::Path;

use nalgebra::Point3;

use crate::error::Result;
use crate::geometry::{
    sample_surface, GridBuildParams, GridBuildReport, Mesh, SdfGrid, SdfSample, SurfacePoint,
};

/// An object prepared for grasp synthesis.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    mesh: Mesh,
    sdf: SdfGrid,
    report: Option<GridBuildReport>,
    samples: Vec<SurfacePoint>,
}

impl ObjectModel {
    /// Builds the signed-distance grid and samples `n_samples` surface
    /// points (deterministic in `seed`).
    pub fn new(
        mesh: Mesh,
        params: &GridBuildParams,
        n_samples: usize,
        seed: u64,
    ) -> Result<ObjectModel> {
        let (sdf, report) = SdfGrid::build(&mesh, params)?;
        let samples = sample_surface(&mesh, n_samples, seed);
        Ok(ObjectModel {
            mesh,
            sdf,
            report: Some(report),
            samples,
        })
    }

    /// Reuses a previously built grid (e.g. loaded from a cache file).
    pub fn with_grid(mesh: Mesh, sdf: SdfGrid, n_samples: usize, seed: u64) -> ObjectModel {
        let samples = sample_surface(&mesh, n_samples, seed);
        ObjectModel {
            mesh,
            sdf,
            report: None,
            samples,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn sdf(&self) -> &SdfGrid {
        &self.sdf
    }

    /// Build diagnostics, absent when the grid was loaded from a cache.
    pub fn build_report(&self) -> Option<&GridBuildReport> {
        self.report.as_ref()
    }

    pub fn surface_samples(&self) -> &[SurfacePoint] {
        &self.samples
    }

    /// Signed distance and gradient at a world point.
    pub fn sample_sdf(&self, p: &Point3<f64>) -> SdfSample {
        self.sdf.sample(p)
    }

    pub fn save_grid(&self, path: &Path) -> Result<()> {
        self.sdf.save(path)
    }
}
