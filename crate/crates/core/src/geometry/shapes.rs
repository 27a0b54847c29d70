//! Procedural test shapes: icosphere, axis-aligned box, capped cylinder,
//! capsule, and lathed solids of revolution (used for mug- and
//! flashlight-like bodies). All generators produce watertight,
//! outward-oriented meshes centred per their documented conventions.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::Result;
use crate::geometry::Mesh;

/// Unit icosahedron subdivided `subdivisions` times and scaled to `radius`,
/// centred at the origin. Face count is `20 * 4^subdivisions`.
pub fn icosphere(radius: f64, subdivisions: u32) -> Mesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();

    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0u32; 3];
            for (k, &(a, b)) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])].iter().enumerate() {
                let key = if a < b { (a, b) } else { (b, a) };
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }

    let vertices = vertices
        .into_iter()
        .map(|v| Point3::from(v * radius))
        .collect();
    Mesh::new(vertices, faces).expect("icosphere is always valid")
}

/// Axis-aligned box centred at the origin with the given half extents.
pub fn box_mesh(half_extents: Vector3<f64>) -> Mesh {
    let h = half_extents;
    let vertices = vec![
        Point3::new(-h.x, -h.y, -h.z),
        Point3::new(h.x, -h.y, -h.z),
        Point3::new(h.x, h.y, -h.z),
        Point3::new(-h.x, h.y, -h.z),
        Point3::new(-h.x, -h.y, h.z),
        Point3::new(h.x, -h.y, h.z),
        Point3::new(h.x, h.y, h.z),
        Point3::new(-h.x, h.y, h.z),
    ];
    let faces = vec![
        // -z
        [0, 2, 1],
        [0, 3, 2],
        // +z
        [4, 5, 6],
        [4, 6, 7],
        // -y
        [0, 1, 5],
        [0, 5, 4],
        // +y
        [2, 3, 7],
        [2, 7, 6],
        // -x
        [0, 4, 7],
        [0, 7, 3],
        // +x
        [1, 2, 6],
        [1, 6, 5],
    ];
    Mesh::new(vertices, faces).expect("box mesh is always valid")
}

/// Capped cylinder of radius `radius` and full height `height`, axis along
/// `z`, centred at the origin.
pub fn cylinder_mesh(radius: f64, height: f64, segments: u32) -> Mesh {
    let n = segments.max(3);
    let hz = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * n as usize + 2);
    for &z in &[-hz, hz] {
        for i in 0..n {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, -hz));
    let top_center = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, hz));

    let mut faces = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        let (b0, b1, t0, t1) = (i, j, n + i, n + j);
        // Side quad, outward.
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        // Caps.
        faces.push([bottom_center, b1, b0]);
        faces.push([top_center, t0, t1]);
    }
    Mesh::new(vertices, faces).expect("cylinder mesh is always valid")
}

/// Capsule: cylinder of half-length `half_length` with hemispherical caps of
/// radius `radius`; axis along `z`, centred at the origin. Used to export
/// posed hand segments.
pub fn capsule_mesh(radius: f64, half_length: f64, segments: u32, rings: u32) -> Mesh {
    let n = segments.max(3);
    let rings = rings.max(2);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut rows: Vec<Vec<u32>> = Vec::new();

    // Bottom pole.
    let bottom_pole = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, -half_length - radius));

    // Bottom hemisphere rows (from pole upward), then top hemisphere rows.
    let push_ring = |vertices: &mut Vec<Point3<f64>>, r: f64, z: f64| -> Vec<u32> {
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                let ix = vertices.len() as u32;
                vertices.push(Point3::new(r * a.cos(), r * a.sin(), z));
                ix
            })
            .collect()
    };

    for k in 1..=rings {
        let t = k as f64 / rings as f64 * std::f64::consts::FRAC_PI_2;
        rows.push(push_ring(
            &mut vertices,
            radius * t.sin(),
            -half_length - radius * t.cos(),
        ));
    }
    for k in 0..rings {
        let t = (rings - k) as f64 / rings as f64 * std::f64::consts::FRAC_PI_2;
        rows.push(push_ring(
            &mut vertices,
            radius * t.sin(),
            half_length + radius * t.cos(),
        ));
    }
    let top_pole = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, half_length + radius));

    let mut faces = Vec::new();
    // Pole fans.
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([bottom_pole, rows[0][j as usize], rows[0][i as usize]]);
        let last = rows.last().unwrap();
        faces.push([top_pole, last[i as usize], last[j as usize]]);
    }
    // Ring bands.
    for w in rows.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        for i in 0..n as usize {
            let j = (i + 1) % n as usize;
            faces.push([lo[i], lo[j], hi[j]]);
            faces.push([lo[i], hi[j], hi[i]]);
        }
    }
    Mesh::new(vertices, faces).expect("capsule mesh is always valid")
}

/// Solid of revolution around `z`.
///
/// `profile` lists `(radius, z)` pairs from bottom to top; the first and last
/// entries must have radius 0 (they become the poles), interior entries must
/// have radius > 0. Returns an error only for malformed profiles.
pub fn lathe_mesh(profile: &[(f64, f64)], segments: u32) -> Result<Mesh> {
    use crate::error::Error;
    if profile.len() < 3 {
        return Err(Error::invalid("lathe profile", "needs at least 3 entries"));
    }
    if profile[0].0 != 0.0 || profile[profile.len() - 1].0 != 0.0 {
        return Err(Error::invalid(
            "lathe profile",
            "first and last entries must lie on the axis (radius 0)",
        ));
    }
    if profile[1..profile.len() - 1].iter().any(|&(r, _)| r <= 0.0) {
        return Err(Error::invalid(
            "lathe profile",
            "interior entries must have positive radius",
        ));
    }
    let n = segments.max(3);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let bottom_pole = 0u32;
    vertices.push(Point3::new(0.0, 0.0, profile[0].1));
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for &(r, z) in &profile[1..profile.len() - 1] {
        rows.push(
            (0..n)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    let ix = vertices.len() as u32;
                    vertices.push(Point3::new(r * a.cos(), r * a.sin(), z));
                    ix
                })
                .collect(),
        );
    }
    let top_pole = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, profile[profile.len() - 1].1));

    let mut faces = Vec::new();
    for i in 0..n as usize {
        let j = (i + 1) % n as usize;
        faces.push([bottom_pole, rows[0][j], rows[0][i]]);
        let last = rows.last().unwrap();
        faces.push([top_pole, last[i], last[j]]);
    }
    for w in rows.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        for i in 0..n as usize {
            let j = (i + 1) % n as usize;
            faces.push([lo[i], lo[j], hi[j]]);
            faces.push([lo[i], hi[j], hi[i]]);
        }
    }
    Mesh::new(vertices, faces)
}

/// Profile of a mug-like body: a cylindrical cup with a slightly rounded lip
/// and recessed base. Roughly 12 cm tall, 4.5 cm radius.
pub fn mug_profile() -> Vec<(f64, f64)> {
    vec![
        (0.0, 0.0),
        (0.030, 0.0),
        (0.042, 0.004),
        (0.045, 0.020),
        (0.045, 0.100),
        (0.044, 0.115),
        (0.040, 0.120),
        (0.020, 0.120),
        (0.0, 0.120),
    ]
}

/// Profile of a flashlight-like body: wide head tapering to a slimmer barrel.
/// Roughly 18 cm long, head radius 2.8 cm, barrel radius 1.7 cm.
pub fn flashlight_profile() -> Vec<(f64, f64)> {
    vec![
        (0.0, 0.0),
        (0.024, 0.0),
        (0.028, 0.010),
        (0.028, 0.045),
        (0.020, 0.060),
        (0.017, 0.070),
        (0.017, 0.170),
        (0.012, 0.180),
        (0.0, 0.180),
    ]
}
