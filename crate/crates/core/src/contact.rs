//! Contact maps: object-surface points labelled attractive (+1) or
//! repulsive (-1).
//!
//! Maps come from three sources: thresholding a per-vertex scalar field
//! (e.g. a painted or simulated touch likelihood), manual geometric regions,
//! or files written by [`ContactMap::save`]. Positions and normals are
//! snapped to `f32` on construction so that save/load round-trips are
//! lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{barycentric, Mesh, SurfacePoint};

/// One labelled surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub position: Point3<f64>,
    /// Outward surface normal.
    pub normal: Vector3<f64>,
    /// +1 attractive, -1 repulsive.
    pub label: i8,
}

/// A labelled sampling of an object surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMap {
    points: Vec<ContactPoint>,
    threshold: f64,
    source: String,
}

/// A per-vertex scalar field over a mesh (values aligned with vertices).
#[derive(Debug, Clone)]
pub struct ScalarContactField {
    values: Vec<f64>,
}

impl ScalarContactField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertices().len() {
            return Err(Error::invalid(
                "contact field",
                format!(
                    "{} values for {} vertices",
                    values.len(),
                    mesh.vertices().len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("contact field", "non-finite value"));
        }
        Ok(ScalarContactField { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Field value at a surface point, interpolated barycentrically on the
    /// point's face.
    pub fn interpolate(&self, mesh: &Mesh, point: &SurfacePoint) -> f64 {
        let face = mesh.faces()[point.face as usize];
        let [a, b, c] = mesh.triangle(point.face as usize);
        let w = barycentric(&point.position, &a, &b, &c);
        let t0 = self.values[face[0] as usize];
        let t1 = self.values[face[1] as usize];
        let t2 = self.values[face[2] as usize];
        // Offset form so constant fields reproduce exactly regardless of
        // rounding in the weights; thresholding at the boundary relies on it.
        t0 + w[1] * (t1 - t0) + w[2] * (t2 - t0)
    }
}

/// A geometric predicate used for manual contact-map authoring.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Points whose projection onto `axis` falls in `[min, max]`.
    Band {
        axis: [f64; 3],
        min: f64,
        max: f64,
    },
    /// Points within `radius` of `center`.
    Sphere { center: [f64; 3], radius: f64 },
    /// Points inside the axis-aligned box `[min, max]`.
    Box { min: [f64; 3], max: [f64; 3] },
}

impl Region {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            Region::Band { axis, min, max } => {
                let a = Vector3::from(*axis);
                let t = a.dot(&p.coords) / a.norm();
                t >= *min && t <= *max
            }
            Region::Sphere { center, radius } => {
                (p - Point3::from(Vector3::from(*center))).norm() <= *radius
            }
            Region::Box { min, max } => (0..3).all(|k| p[k] >= min[k] && p[k] <= max[k]),
        }
    }
}

/// A region together with the label it paints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LabelledRegion {
    pub region: Region,
    /// +1 or -1.
    pub label: i8,
}

impl ContactMap {
    /// Builds a map with explicit labels (snapping coordinates to `f32`).
    pub fn from_labelled_points(
        points: impl IntoIterator<Item = ContactPoint>,
        threshold: f64,
        source: impl Into<String>,
    ) -> Result<ContactMap> {
        let points: Vec<ContactPoint> = points
            .into_iter()
            .map(|p| ContactPoint {
                position: snap_point(&p.position),
                normal: snap_vector(&p.normal),
                label: p.label,
            })
            .collect();
        if points.is_empty() {
            return Err(Error::invalid("contact map", "no points"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.label != 1 && p.label != -1 {
                return Err(Error::invalid(
                    "contact map",
                    format!("point {i} has label {}, expected +1 or -1", p.label),
                ));
            }
        }
        Ok(ContactMap {
            points,
            threshold,
            source: source.into(),
        })
    }

    /// Thresholds a scalar field at sampled points: label +1 exactly when
    /// the interpolated value is at or above `threshold`.
    pub fn from_scalar_field(
        mesh: &Mesh,
        field: &ScalarContactField,
        samples: &[SurfacePoint],
        threshold: f64,
    ) -> Result<ContactMap> {
        let points = samples.iter().map(|s| ContactPoint {
            position: s.position,
            normal: s.normal,
            label: if field.interpolate(mesh, s) >= threshold {
                1
            } else {
                -1
            },
        });
        Self::from_labelled_points(points, threshold, "scalar-field")
    }

    /// Paints labels with geometric regions. Points start repulsive; regions
    /// are applied in order, so later entries override earlier ones.
    pub fn from_regions(
        samples: &[SurfacePoint],
        regions: &[LabelledRegion],
        threshold: f64,
    ) -> Result<ContactMap> {
        for (i, r) in regions.iter().enumerate() {
            if r.label != 1 && r.label != -1 {
                return Err(Error::invalid(
                    "contact map",
                    format!("region {i} has label {}, expected +1 or -1", r.label),
                ));
            }
        }
        let points = samples.iter().map(|s| {
            let mut label = -1i8;
            for r in regions {
                if r.region.contains(&s.position) {
                    label = r.label;
                }
            }
            ContactPoint {
                position: s.position,
                normal: s.normal,
                label,
            }
        });
        Self::from_labelled_points(points, threshold, "regions")
    }

    pub fn points(&self) -> &[ContactPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn attractive_count(&self) -> usize {
        self.points.iter().filter(|p| p.label == 1).count()
    }

    pub fn repulsive_count(&self) -> usize {
        self.points.iter().filter(|p| p.label == -1).count()
    }

    /// Returns a copy with every point transformed by a rigid isometry
    /// (used for equivariance checks and object re-posing).
    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> ContactMap {
        let points = self.points.iter().map(|p| ContactPoint {
            position: snap_point(&(iso * p.position)),
            normal: snap_vector(&(iso.rotation * p.normal)),
            label: p.label,
        });
        ContactMap {
            points: points.collect(),
            threshold: self.threshold,
            source: self.source.clone(),
        }
    }

    /// Writes the map: a small text header followed by binary little-endian
    /// records (position `3 x f32`, normal `3 x f32`, label `i8`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(
            w,
            "contactmap 1\ncount {}\ntau {}\nsource {}\nend_header\n",
            self.points.len(),
            self.threshold,
            self.source
        )
        .map_err(io)?;
        for p in &self.points {
            for k in 0..3 {
                w.write_all(&(p.position[k] as f32).to_le_bytes()).map_err(io)?;
            }
            for k in 0..3 {
                w.write_all(&(p.normal[k] as f32).to_le_bytes()).map_err(io)?;
            }
            w.write_all(&[p.label as u8]).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a map written by [`ContactMap::save`].
    pub fn load(path: &Path) -> Result<ContactMap> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);

        let mut line = String::new();
        r.read_line(&mut line).map_err(io)?;
        if line.trim() != "contactmap 1" {
            return Err(Error::parse("contact map", path, "bad magic line"));
        }
        let mut count: Option<usize> = None;
        let mut tau: Option<f64> = None;
        let mut source = String::new();
        loop {
            line.clear();
            if r.read_line(&mut line).map_err(io)? == 0 {
                return Err(Error::parse("contact map", path, "truncated header"));
            }
            let trimmed = line.trim_end_matches('\n');
            if trimmed == "end_header" {
                break;
            }
            if let Some(v) = trimmed.strip_prefix("count ") {
                count = v.parse().ok();
            } else if let Some(v) = trimmed.strip_prefix("tau ") {
                tau = v.parse().ok();
            } else if let Some(v) = trimmed.strip_prefix("source ") {
                source = v.to_string();
            } else {
                return Err(Error::parse(
                    "contact map",
                    path,
                    format!("unexpected header line `{trimmed}`"),
                ));
            }
        }
        let count = count.ok_or_else(|| Error::parse("contact map", path, "missing count"))?;
        let tau = tau.ok_or_else(|| Error::parse("contact map", path, "missing tau"))?;

        let mut points = Vec::with_capacity(count);
        let mut f32buf = [0u8; 4];
        let mut lbuf = [0u8; 1];
        for _ in 0..count {
            let mut coords = [0f64; 6];
            for c in &mut coords {
                r.read_exact(&mut f32buf).map_err(io)?;
                *c = f32::from_le_bytes(f32buf) as f64;
            }
            r.read_exact(&mut lbuf).map_err(io)?;
            let label = lbuf[0] as i8;
            if label != 1 && label != -1 {
                return Err(Error::parse("contact map", path, "bad label byte"));
            }
            points.push(ContactPoint {
                position: Point3::new(coords[0], coords[1], coords[2]),
                normal: Vector3::new(coords[3], coords[4], coords[5]),
                label,
            });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(io)? != 0 {
            return Err(Error::parse("contact map", path, "trailing bytes"));
        }
        Ok(ContactMap {
            points,
            threshold: tau,
            source,
        })
    }
}

fn snap_point(p: &Point3<f64>) -> Point3<f64> {
    Point3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64)
}

fn snap_vector(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x as f32 as f64, v.y as f32 as f64, v.z as f32 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_surface, shapes};

    /// Threshold semantics: the label is +1 exactly when the field value
    /// reaches the threshold, boundary included.
    #[test]
    fn threshold_boundary_is_attractive() {
        let mesh = shapes::box_mesh(Vector3::new(0.02, 0.02, 0.02));
        let tau = 0.3;
        // Constant fields probe the boundary exactly.
        for (value, expected) in [
            (tau, 1i8),
            (tau + 1e-12, 1),
            (tau - 1e-12, -1),
            (0.0, -1),
            (1.0, 1),
        ] {
            let field =
                ScalarContactField::new(&mesh, vec![value; mesh.vertices().len()]).unwrap();
            let samples = sample_surface(&mesh, 50, 1);
            let map = ContactMap::from_scalar_field(&mesh, &field, &samples, tau).unwrap();
            assert!(
                map.points().iter().all(|p| p.label == expected),
                "field value {value} should label {expected}"
            );
        }
    }

    /// Barycentric interpolation reproduces linear fields exactly, so a
    /// linear-in-position field is the oracle.
    #[test]
    fn interpolation_is_exact_for_linear_fields() {
        let mesh = shapes::icosphere(0.05, 1);
        let dir = Vector3::new(0.3, -0.7, 0.64);
        let f = |p: &Point3<f64>| 0.5 + dir.dot(&p.coords);
        let values: Vec<f64> = mesh.vertices().iter().map(f).collect();
        let field = ScalarContactField::new(&mesh, values).unwrap();
        for s in sample_surface(&mesh, 200, 17) {
            let interp = field.interpolate(&mesh, &s);
            assert!(
                (interp - f(&s.position)).abs() < 1e-12,
                "at {:?}: {interp} vs {}",
                s.position,
                f(&s.position)
            );
        }
    }

    #[test]
    fn regions_apply_in_order_later_wins() {
        let mesh = shapes::cylinder_mesh(0.02, 0.1, 24);
        let samples = sample_surface(&mesh, 400, 3);
        let regions = vec![
            LabelledRegion {
                region: Region::Band {
                    axis: [0.0, 0.0, 1.0],
                    min: -0.05,
                    max: 0.05,
                },
                label: 1,
            },
            // Overrides the attractive band near the top.
            LabelledRegion {
                region: Region::Band {
                    axis: [0.0, 0.0, 1.0],
                    min: 0.03,
                    max: 0.05,
                },
                label: -1,
            },
        ];
        let map = ContactMap::from_regions(&samples, &regions, 0.3).unwrap();
        for p in map.points() {
            let expected = if p.position.z >= 0.03 {
                -1
            } else {
                1
            };
            assert_eq!(p.label, expected, "at z {}", p.position.z);
        }
        assert!(map.attractive_count() > 0);
        assert!(map.repulsive_count() > 0);
    }

    #[test]
    fn sphere_and_box_regions_contain_expected_points() {
        let sphere = Region::Sphere {
            center: [0.0, 0.0, 0.1],
            radius: 0.05,
        };
        assert!(sphere.contains(&Point3::new(0.0, 0.0, 0.06)));
        assert!(!sphere.contains(&Point3::new(0.0, 0.0, 0.03)));
        let boxr = Region::Box {
            min: [-0.01, -0.01, -0.01],
            max: [0.01, 0.01, 0.01],
        };
        assert!(boxr.contains(&Point3::origin()));
        assert!(!boxr.contains(&Point3::new(0.02, 0.0, 0.0)));
    }

    #[test]
    fn save_load_round_trip_is_lossless() {
        let mesh = shapes::icosphere(0.03, 2);
        let samples = sample_surface(&mesh, 300, 9);
        let regions = vec![LabelledRegion {
            region: Region::Band {
                axis: [0.0, 0.0, 1.0],
                min: -0.01,
                max: 0.01,
            },
            label: 1,
        }];
        let map = ContactMap::from_regions(&samples, &regions, 0.3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.contactmap");
        map.save(&path).unwrap();
        let loaded = ContactMap::load(&path).unwrap();
        // Construction snapped to f32, so the round trip is bit-exact.
        assert_eq!(map, loaded);
    }

    #[test]
    fn rejects_mismatched_field_length() {
        let mesh = shapes::box_mesh(Vector3::new(0.01, 0.01, 0.01));
        assert!(ScalarContactField::new(&mesh, vec![0.0; 3]).is_err());
    }

    #[test]
    fn load_rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.contactmap");
        std::fs::write(&path, b"not a contact map").unwrap();
        assert!(ContactMap::load(&path).is_err());
    }
}
