//! Analytic signed distance primitives used for hand segments: sphere,
//! capsule (axis along local z), and box. All return exact closed-form
//! values and gradients in the primitive's local frame.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::sdf::SdfSample;
use crate::geometry::{shapes, Mesh};

/// Golden angle used for deterministic spiral point layouts.
const GOLDEN_ANGLE: f64 = 2.399963229728653;

/// An analytic signed-distance primitive in its local frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveShape {
    /// Sphere centred at the local origin.
    Sphere { radius: f64 },
    /// Capsule with axis along local `z`: a segment from `(0,0,-half_length)`
    /// to `(0,0,half_length)` inflated by `radius`.
    Capsule { radius: f64, half_length: f64 },
    /// Axis-aligned box centred at the local origin.
    Box { half_extents: [f64; 3] },
}

impl PrimitiveShape {
    /// Signed distance and gradient at a local-frame point.
    ///
    /// The gradient is the exact derivative wherever the SDF is
    /// differentiable; on measure-zero tie sets (box diagonal planes, capsule
    /// axis, sphere centre) a fixed deterministic choice is made. `region`
    /// in the returned sample is a discrete code identifying which formula
    /// branch was taken, so callers can detect activation changes.
    pub fn sample(&self, p: &Point3<f64>) -> SdfSample {
        match *self {
            PrimitiveShape::Sphere { radius } => {
                let r = p.coords.norm();
                let gradient = if r > 1e-12 {
                    p.coords / r
                } else {
                    Vector3::z()
                };
                SdfSample {
                    value: r - radius,
                    gradient,
                    clamped: false,
                    region: 0,
                }
            }
            PrimitiveShape::Capsule {
                radius,
                half_length,
            } => {
                let zc = p.z.clamp(-half_length, half_length);
                let offset = Vector3::new(p.x, p.y, p.z - zc);
                let r = offset.norm();
                let gradient = if r > 1e-12 {
                    offset / r
                } else {
                    Vector3::x()
                };
                // Region: which part of the axis the point projects to.
                let region = if p.z < -half_length {
                    0
                } else if p.z > half_length {
                    2
                } else {
                    1
                };
                SdfSample {
                    value: r - radius,
                    gradient,
                    clamped: false,
                    region,
                }
            }
            PrimitiveShape::Box { half_extents } => {
                let h = Vector3::new(half_extents[0], half_extents[1], half_extents[2]);
                let q = Vector3::new(p.x.abs() - h.x, p.y.abs() - h.y, p.z.abs() - h.z);
                let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
                let out_norm = outside.norm();
                let sign = Vector3::new(
                    if p.x < 0.0 { -1.0 } else { 1.0 },
                    if p.y < 0.0 { -1.0 } else { 1.0 },
                    if p.z < 0.0 { -1.0 } else { 1.0 },
                );
                if out_norm > 0.0 {
                    // Outside: distance to the nearest face/edge/corner.
                    let grad = Vector3::new(
                        sign.x * outside.x / out_norm,
                        sign.y * outside.y / out_norm,
                        sign.z * outside.z / out_norm,
                    );
                    let mask = (u64::from(q.x > 0.0))
                        | (u64::from(q.y > 0.0) << 1)
                        | (u64::from(q.z > 0.0) << 2);
                    SdfSample {
                        value: out_norm,
                        gradient: grad,
                        clamped: false,
                        region: 8 | mask,
                    }
                } else {
                    // Inside: negative distance to the closest face; ties go
                    // to the lowest axis index.
                    let mut axis = 0usize;
                    for k in 1..3 {
                        if q[k] > q[axis] {
                            axis = k;
                        }
                    }
                    let mut grad = Vector3::zeros();
                    grad[axis] = sign[axis];
                    SdfSample {
                        value: q[axis],
                        gradient: grad,
                        clamped: false,
                        region: axis as u64,
                    }
                }
            }
        }
    }

    /// Radius of the smallest origin-centred sphere containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            PrimitiveShape::Sphere { radius } => radius,
            PrimitiveShape::Capsule {
                radius,
                half_length,
            } => radius + half_length,
            PrimitiveShape::Box { half_extents } => {
                Vector3::new(half_extents[0], half_extents[1], half_extents[2]).norm()
            }
        }
    }

    /// `count` well-spread points on the surface, with outward normals.
    ///
    /// Deterministic: candidates come from closed-form spiral/grid layouts
    /// and are thinned by farthest-point sampling.
    pub fn surface_points(&self, count: usize) -> Vec<(Point3<f64>, Vector3<f64>)> {
        let candidates = self.surface_candidates((count * 4).max(64));
        farthest_point_subset(&candidates, count)
    }

    fn surface_candidates(&self, m: usize) -> Vec<(Point3<f64>, Vector3<f64>)> {
        match *self {
            PrimitiveShape::Sphere { radius } => (0..m)
                .map(|i| {
                    let d = fibonacci_direction(i, m);
                    (Point3::from(d * radius), d)
                })
                .collect(),
            PrimitiveShape::Capsule {
                radius,
                half_length,
            } => {
                let cap_area = 4.0 * std::f64::consts::PI * radius * radius;
                let side_area = std::f64::consts::TAU * radius * 2.0 * half_length;
                let total = cap_area + side_area;
                let m_caps = ((cap_area / total) * m as f64).round() as usize;
                let m_side = m - m_caps.min(m);
                let mut out = Vec::with_capacity(m);
                for i in 0..m_caps {
                    let d = fibonacci_direction(i, m_caps.max(1));
                    let z_shift = if d.z >= 0.0 { half_length } else { -half_length };
                    out.push((
                        Point3::new(d.x * radius, d.y * radius, d.z * radius + z_shift),
                        d,
                    ));
                }
                for i in 0..m_side {
                    let z = -half_length + 2.0 * half_length * (i as f64 + 0.5) / m_side as f64;
                    let a = GOLDEN_ANGLE * i as f64;
                    let d = Vector3::new(a.cos(), a.sin(), 0.0);
                    out.push((Point3::new(d.x * radius, d.y * radius, z), d));
                }
                out
            }
            PrimitiveShape::Box { half_extents } => {
                let h = half_extents;
                let areas = [
                    h[1] * h[2], // x faces
                    h[0] * h[2], // y faces
                    h[0] * h[1], // z faces
                ];
                let total: f64 = 2.0 * areas.iter().sum::<f64>();
                let mut out = Vec::with_capacity(m);
                for axis in 0..3 {
                    let per_face = ((areas[axis] / total) * m as f64).ceil() as usize;
                    let (u_axis, v_axis) = ((axis + 1) % 3, (axis + 2) % 3);
                    // Grid resolution proportional to the face aspect ratio.
                    let aspect = (h[u_axis] / h[v_axis]).sqrt();
                    let ku = ((per_face as f64).sqrt() * aspect).ceil().max(1.0) as usize;
                    let kv = per_face.div_ceil(ku).max(1);
                    for &side in &[-1.0, 1.0] {
                        for iu in 0..ku {
                            for iv in 0..kv {
                                let mut p = Point3::origin();
                                p[axis] = side * h[axis];
                                p[u_axis] = h[u_axis] * (2.0 * (iu as f64 + 0.5) / ku as f64 - 1.0);
                                p[v_axis] = h[v_axis] * (2.0 * (iv as f64 + 0.5) / kv as f64 - 1.0);
                                let mut n = Vector3::zeros();
                                n[axis] = side;
                                out.push((p, n));
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Triangle mesh of the primitive surface, for export.
    pub fn to_mesh(&self) -> Mesh {
        match *self {
            PrimitiveShape::Sphere { radius } => shapes::icosphere(radius, 2),
            PrimitiveShape::Capsule {
                radius,
                half_length,
            } => shapes::capsule_mesh(radius, half_length, 20, 6),
            PrimitiveShape::Box { half_extents } => shapes::box_mesh(Vector3::new(
                half_extents[0],
                half_extents[1],
                half_extents[2],
            )),
        }
    }
}

/// Evenly distributed unit direction `i` of `m` (Fibonacci sphere).
fn fibonacci_direction(i: usize, m: usize) -> Vector3<f64> {
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let a = GOLDEN_ANGLE * i as f64;
    Vector3::new(r * a.cos(), r * a.sin(), z)
}

/// Greedy farthest-point thinning of `candidates` down to `count` entries.
/// Starts from the first candidate; fully deterministic.
fn farthest_point_subset(
    candidates: &[(Point3<f64>, Vector3<f64>)],
    count: usize,
) -> Vec<(Point3<f64>, Vector3<f64>)> {
    if candidates.len() <= count {
        return candidates.to_vec();
    }
    let mut chosen = Vec::with_capacity(count);
    let mut min_dist: Vec<f64> = vec![f64::INFINITY; candidates.len()];
    let mut next = 0usize;
    for _ in 0..count {
        chosen.push(candidates[next]);
        let anchor = candidates[next].0;
        let mut best = 0usize;
        let mut best_d = -1.0;
        for (i, c) in candidates.iter().enumerate() {
            let d = (c.0 - anchor).norm_squared();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best_d {
                best_d = min_dist[i];
                best = i;
            }
        }
        next = best;
    }
    chosen
}
