//! Indexed triangle mesh with the validation the rest of the crate relies on:
//! in-range indices, no degenerate faces, finite coordinates, unit normals.

use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{Error, Result};

/// Faces whose doubled area falls below this are dropped as degenerate.
/// Meshes here live at metre scale, so 1e-14 m² is far below any real feature
/// yet comfortably above accumulated rounding noise in the cross product.
const DEGENERATE_DOUBLE_AREA: f64 = 1e-14;

/// An indexed triangle mesh.
///
/// Construction validates the data and silently drops degenerate
/// (zero-area) faces, recording how many were removed. Face normals are
/// precomputed and unit length.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    face_normals: Vec<Vector3<f64>>,
    dropped_degenerate: usize,
}

impl Mesh {
    /// Builds a mesh from vertices and triangle indices.
    ///
    /// Fails on: empty vertex list, no surviving faces, out-of-range indices,
    /// or non-finite coordinates. Degenerate faces are dropped, not errors.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::invalid("mesh", "no vertices"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(
                    "mesh",
                    format!("vertex {i} has non-finite coordinates"),
                ));
            }
        }
        let n = vertices.len() as u32;
        let mut kept = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut dropped = 0usize;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&ix| ix >= n) {
                return Err(Error::invalid(
                    "mesh",
                    format!("face {i} references vertex out of range"),
                ));
            }
            let [a, b, c] = [
                vertices[f[0] as usize],
                vertices[f[1] as usize],
                vertices[f[2] as usize],
            ];
            let cross = (b - a).cross(&(c - a));
            let double_area = cross.norm();
            if double_area <= DEGENERATE_DOUBLE_AREA {
                dropped += 1;
                continue;
            }
            kept.push(*f);
            normals.push(cross / double_area);
        }
        if kept.is_empty() {
            return Err(Error::invalid("mesh", "no non-degenerate faces"));
        }
        Ok(Mesh {
            vertices,
            faces: kept,
            face_normals: normals,
            dropped_degenerate: dropped,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Unit outward normal of face `f` (orientation follows the winding).
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        self.face_normals[f]
    }

    /// Number of degenerate faces dropped at construction.
    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    /// The three corner positions of face `f`.
    pub fn triangle(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Area of face `f`.
    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Total surface area.
    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Returns a rigidly transformed copy.
    pub fn transformed(&self, iso: &Isometry3<f64>) -> Mesh {
        let vertices = self.vertices.iter().map(|v| iso * v).collect();
        // Rigid transforms cannot create degenerate faces, so this cannot fail.
        let mut out = Mesh::new(vertices, self.faces.clone()).expect("rigid transform of valid mesh");
        out.dropped_degenerate = self.dropped_degenerate;
        out
    }

    /// True when every edge is shared by exactly two faces with opposite
    /// orientation — i.e. the mesh is closed and consistently wound.
    pub fn is_watertight(&self) -> bool {
        use std::collections::HashMap;
        // Count directed edges; watertight + consistently oriented means each
        // undirected edge appears exactly once in each direction.
        let mut directed: HashMap<(u32, u32), i32> = HashMap::new();
        for f in &self.faces {
            for e in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return false;
            }
            if directed.get(&(b, a)).copied().unwrap_or(0) != 1 {
                return false;
            }
        }
        true
    }
}
