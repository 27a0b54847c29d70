//! Area-weighted random sampling of mesh surfaces.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Mesh;

/// A point sampled on a mesh surface, with the face it came from and that
/// face's unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Point3<f64>,
    pub normal: Vector3<f64>,
    pub face: u32,
}

/// Draws `count` points uniformly (by area) over the mesh surface.
///
/// Faces are chosen by binary search in the cumulative-area table; the point
/// within a face uses the reflection method, which is uniform on the triangle
/// without a square root. Fully determined by `seed`.
pub fn sample_surface(mesh: &Mesh, count: usize, seed: u64) -> Vec<SurfacePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }

    (0..count)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let face = cumulative.partition_point(|&c| c < target).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(face);
            let mut r1: f64 = rng.random();
            let mut r2: f64 = rng.random();
            if r1 + r2 > 1.0 {
                r1 = 1.0 - r1;
                r2 = 1.0 - r2;
            }
            SurfacePoint {
                position: a + (b - a) * r1 + (c - a) * r2,
                normal: mesh.face_normal(face),
                face: face as u32,
            }
        })
        .collect()
}

/// Barycentric coordinates of `p` with respect to triangle `(a, b, c)`,
/// computed by projecting onto the triangle plane. Used to interpolate
/// per-vertex scalars at sampled points.
pub(crate) fn barycentric(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> [f64; 3] {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [1.0 - v - w, v, w]
}
