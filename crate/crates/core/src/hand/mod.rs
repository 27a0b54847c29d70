//! Articulated hand models: a kinematic tree of rigid segments, each with a
//! signed distance shape, plus the annotations grasp synthesis needs
//! (contact sites, a thumb reference point, an approach axis, collision
//! check points).

pub mod config;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DVector, Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    sample_surface, GridBuildParams, Mesh, PrimitiveShape, SdfGrid, SdfSample,
};
use config::{HandConfig, PoseConfig, ShapeConfig};

/// Default number of collision check points per segment.
pub const DEFAULT_CHECK_POINTS: usize = 50;

/// Default grid spacing for mesh-shaped segments (metres).
const SEGMENT_GRID_SPACING: f64 = 0.0015;

/// Shape of a segment: analytic primitive or mesh-backed distance grid.
#[derive(Debug, Clone)]
pub enum SegmentShape {
    Primitive(PrimitiveShape),
    Grid {
        grid: SdfGrid,
        mesh: Mesh,
        bounding_radius: f64,
    },
}

impl SegmentShape {
    /// Signed distance sample at a point in the shape's local frame.
    pub fn sample(&self, p: &Point3<f64>) -> SdfSample {
        match self {
            SegmentShape::Primitive(prim) => prim.sample(p),
            SegmentShape::Grid { grid, .. } => grid.sample(p),
        }
    }

    /// Radius of an origin-centred bounding sphere.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            SegmentShape::Primitive(prim) => prim.bounding_radius(),
            SegmentShape::Grid {
                bounding_radius, ..
            } => *bounding_radius,
        }
    }

    /// Upper bound on how far below the true distance a sample can fall
    /// (such as interpolation error); used to keep pruned nearest-segment
    /// queries exact.
    pub fn sdf_margin(&self) -> f64 {
        match self {
            SegmentShape::Primitive(_) => 0.0,
            SegmentShape::Grid { grid, .. } => 3.0 * grid.spacing(),
        }
    }

    /// Mesh representation for export.
    pub fn to_mesh(&self) -> Mesh {
        match self {
            SegmentShape::Primitive(prim) => prim.to_mesh(),
            SegmentShape::Grid { mesh, .. } => mesh.clone(),
        }
    }

    fn surface_points(&self, count: usize) -> Vec<(Point3<f64>, Vector3<f64>)> {
        match self {
            SegmentShape::Primitive(prim) => prim.surface_points(count),
            SegmentShape::Grid { mesh, .. } => {
                // Deterministic: oversample, then thin by taking every k-th
                // after a farthest-first pass is overkill here; the samples
                // are already well-spread for count << sample size.
                let samples = sample_surface(mesh, count * 4, 0xC0FFEE);
                let mut out: Vec<(Point3<f64>, Vector3<f64>)> = Vec::with_capacity(count);
                let mut min_d: Vec<f64> = vec![f64::INFINITY; samples.len()];
                let mut next = 0usize;
                for _ in 0..count.min(samples.len()) {
                    out.push((samples[next].position, samples[next].normal));
                    let anchor = samples[next].position;
                    let mut best = 0usize;
                    let mut best_d = -1.0;
                    for (i, s) in samples.iter().enumerate() {
                        let d = (s.position - anchor).norm_squared();
                        if d < min_d[i] {
                            min_d[i] = d;
                        }
                        if min_d[i] > best_d {
                            best_d = min_d[i];
                            best = i;
                        }
                    }
                    next = best;
                }
                out
            }
        }
    }
}

/// One rigid segment of the hand.
#[derive(Debug, Clone)]
pub struct HandSegment {
    pub name: String,
    pub shape: SegmentShape,
    /// Pose of the shape frame within the segment frame.
    pub shape_pose: Isometry3<f64>,
    /// Collision check points, in the segment frame, on the shape surface.
    pub check_points: Vec<Point3<f64>>,
    /// Indices into `check_points` used as closing probes (tip-biased subset).
    pub closing_probes: Vec<usize>,
}

/// One revolute joint.
#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    /// Parent segment index.
    pub parent: usize,
    /// Child segment index.
    pub child: usize,
    /// Fixed transform from parent frame to joint frame.
    pub origin: Isometry3<f64>,
    /// Rotation axis in the joint frame (unit).
    pub axis: Unit<Vector3<f64>>,
    pub lower: f64,
    pub upper: f64,
    pub dof: usize,
    pub open: f64,
    /// +1.0, -1.0, or 0.0.
    pub closing: f64,
}

/// A desired contact location on the hand surface.
#[derive(Debug, Clone)]
pub struct ContactSite {
    pub segment: usize,
    /// Site position in the segment frame (on the shape surface).
    pub point: Point3<f64>,
    /// Outward surface normal at the site, in the segment frame (from the
    /// segment's own SDF gradient).
    pub normal: Vector3<f64>,
}

/// Pose of the hand: palm rigid transform plus one value per joint DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub joints: DVector<f64>,
}

impl HandPose {
    /// Palm world transform.
    pub fn palm_transform(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Number of optimizable parameters: 3 rotation + 3 translation + joints.
    pub fn tangent_dim(&self) -> usize {
        6 + self.joints.len()
    }
}

/// Stable serialized form: quaternion as `[w, x, y, z]`.
#[derive(Serialize, Deserialize)]
struct HandPoseRepr {
    rotation: [f64; 4],
    translation: [f64; 3],
    joints: Vec<f64>,
}

impl Serialize for HandPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let q = self.rotation.quaternion();
        HandPoseRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [self.translation.x, self.translation.y, self.translation.z],
            joints: self.joints.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HandPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = HandPoseRepr::deserialize(d)?;
        let [w, x, y, z] = repr.rotation;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        // Keep stored unit quaternions bit-exact; only renormalize inputs
        // that are actually off the unit sphere.
        let rotation = if (q.norm_squared() - 1.0).abs() < 1e-9 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(HandPose {
            rotation,
            translation: Vector3::from(repr.translation),
            joints: DVector::from_vec(repr.joints),
        })
    }
}

/// World bounding spheres of all segments at one pose (center, radius plus
/// sampling-error margin). See [`HandModel::closest_segment_bounded`].
#[derive(Debug, Clone)]
pub struct SegmentBounds {
    spheres: Vec<(Point3<f64>, f64)>,
}

/// World-frame kinematics of the hand at one pose.
#[derive(Debug, Clone)]
pub struct FkResult {
    /// World transform of each segment frame.
    pub segment_world: Vec<Isometry3<f64>>,
    /// World transform of each segment's *shape* frame.
    pub shape_world: Vec<Isometry3<f64>>,
    /// World-frame rotation axis of each joint.
    pub joint_axis_world: Vec<Vector3<f64>>,
    /// World-frame pivot point of each joint.
    pub joint_pivot_world: Vec<Point3<f64>>,
}

/// An articulated hand model.
#[derive(Debug, Clone)]
pub struct HandModel {
    pub name: String,
    segments: Vec<HandSegment>,
    joints: Vec<Joint>,
    palm: usize,
    dof_count: usize,
    /// Parent joint index per segment (None for the palm).
    parent_joint: Vec<Option<usize>>,
    /// Ancestor joint chain per segment, root-first.
    ancestor_joints: Vec<Vec<usize>>,
    /// Joint index per DOF slot.
    dof_to_joint: Vec<usize>,
    thumb_segment: usize,
    thumb_point: Point3<f64>,
    sites: Vec<ContactSite>,
    approach_axis: Unit<Vector3<f64>>,
    palm_offset: f64,
    /// Segment pairs (a < b) that are adjacent (joined by a joint).
    adjacent: HashSet<(usize, usize)>,
}

impl HandModel {
    /// Loads a hand from a `.handcfg` file.
    pub fn load(path: &Path, check_points: usize) -> Result<HandModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: HandConfig = toml::from_str(&text)
            .map_err(|e| Error::parse("hand config", path, e.to_string()))?;
        Self::from_config(&config, path.parent(), check_points)
    }

    /// Loads one of the built-in hands (`barrett-like`, `allegro-like`,
    /// `human-like`).
    pub fn builtin(name: &str, check_points: usize) -> Result<HandModel> {
        let text = config::builtin_config_str(name).ok_or_else(|| Error::UnknownBuiltin {
            kind: "hand",
            name: name.to_string(),
        })?;
        let config: HandConfig = toml::from_str(text)
            .map_err(|e| Error::parse("hand config", name, e.to_string()))?;
        Self::from_config(&config, None, check_points)
    }

    /// Resolves a hand source string: `builtin:<name>` or a file path.
    pub fn from_source(source: &str, check_points: usize) -> Result<HandModel> {
        if let Some(name) = source.strip_prefix("builtin:") {
            Self::builtin(name, check_points)
        } else {
            Self::load(Path::new(source), check_points)
        }
    }

    /// Builds and validates the model from a parsed config.
    pub fn from_config(
        config: &HandConfig,
        base_dir: Option<&Path>,
        check_points: usize,
    ) -> Result<HandModel> {
        let fail = |detail: String| Error::HandModel {
            name: config.name.clone(),
            detail,
        };

        if config.segments.is_empty() {
            return Err(fail("no segments".into()));
        }
        let mut name_to_index: HashMap<&str, usize> = HashMap::new();
        for (i, seg) in config.segments.iter().enumerate() {
            if name_to_index.insert(seg.name.as_str(), i).is_some() {
                return Err(fail(format!("duplicate segment name `{}`", seg.name)));
            }
        }
        let palm = *name_to_index
            .get(config.palm.as_str())
            .ok_or_else(|| fail(format!("palm segment `{}` not found", config.palm)))?;

        // Joints, one DOF each, indices 0..D-1 used exactly once.
        let dof_count = config.joints.len();
        let mut dof_seen = vec![false; dof_count];
        let mut joints = Vec::with_capacity(dof_count);
        let mut parent_joint: Vec<Option<usize>> = vec![None; config.segments.len()];
        let mut joint_names = HashSet::new();
        for (ji, jc) in config.joints.iter().enumerate() {
            if !joint_names.insert(jc.name.as_str()) {
                return Err(fail(format!("duplicate joint name `{}`", jc.name)));
            }
            let parent = *name_to_index
                .get(jc.parent.as_str())
                .ok_or_else(|| fail(format!("joint `{}`: unknown parent `{}`", jc.name, jc.parent)))?;
            let child = *name_to_index
                .get(jc.child.as_str())
                .ok_or_else(|| fail(format!("joint `{}`: unknown child `{}`", jc.name, jc.child)))?;
            if child == palm {
                return Err(fail(format!("joint `{}` targets the palm", jc.name)));
            }
            if parent_joint[child].is_some() {
                return Err(fail(format!(
                    "segment `{}` has more than one parent joint",
                    jc.child
                )));
            }
            parent_joint[child] = Some(ji);
            if jc.dof >= dof_count {
                return Err(fail(format!(
                    "joint `{}`: dof index {} out of range 0..{}",
                    jc.name, jc.dof, dof_count
                )));
            }
            if dof_seen[jc.dof] {
                return Err(fail(format!("dof index {} assigned twice", jc.dof)));
            }
            dof_seen[jc.dof] = true;
            if !(jc.limits[0] < jc.limits[1]) {
                return Err(fail(format!(
                    "joint `{}`: limits must satisfy lower < upper",
                    jc.name
                )));
            }
            if jc.open < jc.limits[0] || jc.open > jc.limits[1] {
                return Err(fail(format!(
                    "joint `{}`: open value outside limits",
                    jc.name
                )));
            }
            if ![-1.0, 0.0, 1.0].contains(&jc.closing) {
                return Err(fail(format!(
                    "joint `{}`: closing must be -1, 0, or 1",
                    jc.name
                )));
            }
            let axis = Vector3::from(jc.axis);
            if axis.norm() < 1e-9 {
                return Err(fail(format!("joint `{}`: zero axis", jc.name)));
            }
            joints.push(Joint {
                name: jc.name.clone(),
                parent,
                child,
                origin: pose_config_to_isometry(&jc.origin),
                axis: Unit::new_normalize(axis),
                lower: jc.limits[0],
                upper: jc.limits[1],
                dof: jc.dof,
                open: jc.open,
                closing: jc.closing,
            });
        }

        // Every non-palm segment needs a parent; tree must be connected and
        // acyclic (checked by walking to the root with a step budget).
        let mut ancestor_joints: Vec<Vec<usize>> = vec![Vec::new(); config.segments.len()];
        for (si, seg) in config.segments.iter().enumerate() {
            if si == palm {
                continue;
            }
            let mut chain = Vec::new();
            let mut cursor = si;
            let mut steps = 0;
            while cursor != palm {
                let ji = parent_joint[cursor].ok_or_else(|| {
                    fail(format!("segment `{}` is not connected to the palm", seg.name))
                })?;
                chain.push(ji);
                cursor = joints[ji].parent;
                steps += 1;
                if steps > config.segments.len() {
                    return Err(fail("kinematic tree contains a cycle".into()));
                }
            }
            chain.reverse();
            ancestor_joints[si] = chain;
        }

        let mut dof_to_joint = vec![usize::MAX; dof_count];
        for (ji, j) in joints.iter().enumerate() {
            dof_to_joint[j.dof] = ji;
        }

        // Build segments: shapes, check points, closing probes.
        let mut segments = Vec::with_capacity(config.segments.len());
        for seg in &config.segments {
            let shape = match &seg.shape {
                ShapeConfig::Sphere { radius } => {
                    SegmentShape::Primitive(PrimitiveShape::Sphere { radius: *radius })
                }
                ShapeConfig::Capsule {
                    radius,
                    half_length,
                } => SegmentShape::Primitive(PrimitiveShape::Capsule {
                    radius: *radius,
                    half_length: *half_length,
                }),
                ShapeConfig::Box { half_extents } => {
                    SegmentShape::Primitive(PrimitiveShape::Box {
                        half_extents: *half_extents,
                    })
                }
                ShapeConfig::Mesh { path, spacing } => {
                    let base = base_dir.ok_or_else(|| {
                        fail(format!(
                            "segment `{}`: mesh shapes need a config directory to resolve `{path}`",
                            seg.name
                        ))
                    })?;
                    let mesh = crate::geometry::load_mesh(&base.join(path))?;
                    let spacing = spacing.unwrap_or(SEGMENT_GRID_SPACING);
                    let (grid, _) = SdfGrid::build(&mesh, &GridBuildParams::with_spacing(spacing))?;
                    let centre_radius = mesh
                        .vertices()
                        .iter()
                        .map(|v| v.coords.norm())
                        .fold(0.0f64, f64::max);
                    SegmentShape::Grid {
                        grid,
                        mesh,
                        bounding_radius: centre_radius,
                    }
                }
            };
            let count = seg.check_points.unwrap_or(check_points);
            let shape_pose = pose_config_to_isometry(&seg.shape_pose);
            // Surface samples come back in the shape frame; check points are
            // stored in the segment frame.
            let surface = shape.surface_points(count);
            let check_pts: Vec<Point3<f64>> = surface.iter().map(|(p, _)| shape_pose * p).collect();
            // Closing probes: the few check points farthest from the segment
            // origin (tips move fastest when a parent joint closes).
            let mut order: Vec<usize> = (0..check_pts.len()).collect();
            order.sort_by(|&a, &b| {
                check_pts[b]
                    .coords
                    .norm_squared()
                    .total_cmp(&check_pts[a].coords.norm_squared())
            });
            let closing_probes: Vec<usize> = order.into_iter().take(4).collect();
            segments.push(HandSegment {
                name: seg.name.clone(),
                shape,
                shape_pose,
                check_points: check_pts,
                closing_probes,
            });
        }

        // Thumb annotation.
        let thumb_segment = *name_to_index
            .get(config.thumb.segment.as_str())
            .ok_or_else(|| fail(format!("thumb segment `{}` not found", config.thumb.segment)))?;
        let thumb_point = Point3::from(Vector3::from(config.thumb.point));
        {
            let seg = &segments[thumb_segment];
            let local = seg.shape_pose.inverse() * thumb_point;
            let d = seg.shape.sample(&local).value;
            if d.abs() > 2e-3 {
                return Err(fail(format!(
                    "thumb point is {d:.4} m from the `{}` surface (must be within 2 mm)",
                    config.thumb.segment
                )));
            }
        }

        // Contact sites with derived outward normals.
        if config.contact_sites.is_empty() {
            return Err(fail("at least one contact site is required".into()));
        }
        let mut sites = Vec::with_capacity(config.contact_sites.len());
        for sc in &config.contact_sites {
            let si = *name_to_index
                .get(sc.segment.as_str())
                .ok_or_else(|| fail(format!("contact site references unknown segment `{}`", sc.segment)))?;
            let point = Point3::from(Vector3::from(sc.point));
            let seg = &segments[si];
            let local = seg.shape_pose.inverse() * point;
            let sample = seg.shape.sample(&local);
            if sample.value.abs() > 2e-3 {
                return Err(fail(format!(
                    "contact site on `{}` is {:.4} m off the surface (must be within 2 mm)",
                    sc.segment, sample.value
                )));
            }
            sites.push(ContactSite {
                segment: si,
                point,
                normal: seg.shape_pose.rotation * sample.gradient,
            });
        }

        let approach = Vector3::from(config.approach_axis);
        if approach.norm() < 1e-9 {
            return Err(fail("approach_axis must be non-zero".into()));
        }
        if config.palm_offset < 0.0 {
            return Err(fail("palm_offset must be non-negative".into()));
        }

        let mut adjacent = HashSet::new();
        for j in &joints {
            let (a, b) = (j.parent.min(j.child), j.parent.max(j.child));
            adjacent.insert((a, b));
        }

        Ok(HandModel {
            name: config.name.clone(),
            segments,
            joints,
            palm,
            dof_count,
            parent_joint,
            ancestor_joints,
            dof_to_joint,
            thumb_segment,
            thumb_point,
            sites,
            approach_axis: Unit::new_normalize(approach),
            palm_offset: config.palm_offset,
            adjacent,
        })
    }

    pub fn segments(&self) -> &[HandSegment] {
        &self.segments
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn palm_index(&self) -> usize {
        self.palm
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn contact_sites(&self) -> &[ContactSite] {
        &self.sites
    }

    pub fn approach_axis(&self) -> Unit<Vector3<f64>> {
        self.approach_axis
    }

    pub fn palm_offset(&self) -> f64 {
        self.palm_offset
    }

    pub fn thumb_segment(&self) -> usize {
        self.thumb_segment
    }

    /// Joint index owning DOF slot `dof`.
    pub fn joint_for_dof(&self, dof: usize) -> usize {
        self.dof_to_joint[dof]
    }

    /// Root-first chain of joints between the palm and `segment`.
    pub fn ancestor_joints(&self, segment: usize) -> &[usize] {
        &self.ancestor_joints[segment]
    }

    /// The joint whose child is `segment` (none for the palm).
    pub fn parent_joint(&self, segment: usize) -> Option<usize> {
        self.parent_joint[segment]
    }

    /// True when the two segments share a joint.
    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacent.contains(&(a.min(b), a.max(b)))
    }

    /// The canonical open pose at a given palm transform.
    pub fn open_pose(&self, rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> HandPose {
        let mut joints = DVector::zeros(self.dof_count);
        for j in &self.joints {
            joints[j.dof] = j.open;
        }
        HandPose {
            rotation,
            translation,
            joints,
        }
    }

    /// Clamps joint values into their limits and renormalizes the rotation.
    pub fn clamp_pose(&self, pose: &mut HandPose) {
        for j in &self.joints {
            let v = pose.joints[j.dof];
            pose.joints[j.dof] = v.clamp(j.lower, j.upper);
        }
        pose.rotation = UnitQuaternion::from_quaternion(*pose.rotation.quaternion());
    }

    /// Applies a tangent step `[rotation; translation; joints]` to a pose:
    /// left-multiplied axis-angle rotation about the palm origin, additive
    /// translation and joint updates, then joint clamping.
    pub fn apply_step(&self, pose: &HandPose, step: &DVector<f64>) -> HandPose {
        debug_assert_eq!(step.len(), 6 + self.dof_count);
        let omega = Vector3::new(step[0], step[1], step[2]);
        let rotation = UnitQuaternion::from_scaled_axis(omega) * pose.rotation;
        let translation = pose.translation + Vector3::new(step[3], step[4], step[5]);
        let mut joints = pose.joints.clone();
        for k in 0..self.dof_count {
            joints[k] += step[6 + k];
        }
        let mut out = HandPose {
            rotation,
            translation,
            joints,
        };
        self.clamp_pose(&mut out);
        out
    }

    /// Forward kinematics: world transforms for every segment and joint.
    pub fn forward_kinematics(&self, pose: &HandPose) -> FkResult {
        assert_eq!(
            pose.joints.len(),
            self.dof_count,
            "pose has {} joint values, hand has {} DOFs",
            pose.joints.len(),
            self.dof_count
        );
        let n = self.segments.len();
        let mut segment_world = vec![Isometry3::identity(); n];
        let mut done = vec![false; n];
        let mut joint_axis_world = vec![Vector3::zeros(); self.joints.len()];
        let mut joint_pivot_world = vec![Point3::origin(); self.joints.len()];

        segment_world[self.palm] = pose.palm_transform();
        done[self.palm] = true;

        // Resolve each segment by walking its ancestor chain; chains are
        // short, and earlier results are reused via `done`.
        for s in 0..n {
            if done[s] {
                continue;
            }
            for &ji in &self.ancestor_joints[s] {
                let j = &self.joints[ji];
                if done[j.child] {
                    continue;
                }
                let joint_frame = segment_world[j.parent] * j.origin;
                let value = pose.joints[j.dof];
                let spin = UnitQuaternion::from_axis_angle(&j.axis, value);
                segment_world[j.child] = joint_frame * Isometry3::from_parts(Translation3::identity(), spin);
                joint_axis_world[ji] = joint_frame.rotation * j.axis.into_inner();
                joint_pivot_world[ji] = Point3::from(joint_frame.translation.vector);
                done[j.child] = true;
            }
        }
        // Joint frames for already-done segments may be skipped above if the
        // child was resolved in another chain; fill any missing joint data.
        for (ji, j) in self.joints.iter().enumerate() {
            if joint_axis_world[ji] == Vector3::zeros() {
                let joint_frame = segment_world[j.parent] * j.origin;
                joint_axis_world[ji] = joint_frame.rotation * j.axis.into_inner();
                joint_pivot_world[ji] = Point3::from(joint_frame.translation.vector);
            }
        }

        let shape_world = (0..n)
            .map(|s| segment_world[s] * self.segments[s].shape_pose)
            .collect();

        FkResult {
            segment_world,
            shape_world,
            joint_axis_world,
            joint_pivot_world,
        }
    }

    /// Signed distance of world point `p` to segment `k`, in world frame.
    pub fn segment_sdf(&self, fk: &FkResult, k: usize, p: &Point3<f64>) -> SdfSample {
        let local = fk.shape_world[k].inverse() * p;
        let mut sample = self.segments[k].shape.sample(&local);
        sample.gradient = fk.shape_world[k].rotation * sample.gradient;
        sample
    }

    /// The segment whose SDF is smallest at `p`, with its sample.
    /// Ties go to the lowest segment index (strict `<` comparison).
    pub fn closest_segment(&self, fk: &FkResult, p: &Point3<f64>) -> (usize, SdfSample) {
        let mut best_k = 0usize;
        let mut best: Option<SdfSample> = None;
        for k in 0..self.segments.len() {
            let s = self.segment_sdf(fk, k, p);
            match &best {
                Some(b) if s.value >= b.value => {}
                _ => {
                    best = Some(s);
                    best_k = k;
                }
            }
        }
        (best_k, best.expect("hand has at least one segment"))
    }

    /// World bounding spheres for every segment at a pose, for pruned
    /// nearest-segment queries.
    pub fn segment_bounds(&self, fk: &FkResult) -> SegmentBounds {
        let spheres = self
            .segments
            .iter()
            .enumerate()
            .map(|(k, seg)| {
                let center = Point3::from(fk.shape_world[k].translation.vector);
                (center, seg.shape.bounding_radius() + seg.shape.sdf_margin())
            })
            .collect();
        SegmentBounds { spheres }
    }

    /// Same result as [`HandModel::closest_segment`], skipping segments whose
    /// bounding sphere proves they cannot beat the running best. A segment is
    /// skipped only when `|p - center| - radius - margin` already exceeds the
    /// best value seen, so the winner (and tie-breaking) is unchanged.
    pub fn closest_segment_bounded(
        &self,
        fk: &FkResult,
        bounds: &SegmentBounds,
        p: &Point3<f64>,
    ) -> (usize, SdfSample) {
        let mut best_k = usize::MAX;
        let mut best: Option<SdfSample> = None;
        for k in 0..self.segments.len() {
            if let Some(b) = &best {
                let (center, reach) = bounds.spheres[k];
                if (p - center).norm() - reach > b.value {
                    continue;
                }
            }
            let s = self.segment_sdf(fk, k, p);
            match &best {
                Some(b) if s.value >= b.value => {}
                _ => {
                    best = Some(s);
                    best_k = k;
                }
            }
        }
        (best_k, best.expect("hand has at least one segment"))
    }

    /// World position of the thumb reference point.
    pub fn thumb_point_world(&self, fk: &FkResult) -> Point3<f64> {
        fk.segment_world[self.thumb_segment] * self.thumb_point
    }

    /// Jacobian of a world point attached to `segment` with respect to the
    /// pose tangent `[omega; dt; joints]`, as a `3 x (6 + D)` matrix.
    ///
    /// Rotation convention matches [`HandModel::apply_step`]: the palm
    /// rotation is perturbed by a left-multiplied axis-angle about the palm
    /// origin, so `dx/d_omega = -[x - t_palm]_x`.
    pub fn point_jacobian(
        &self,
        fk: &FkResult,
        pose: &HandPose,
        segment: usize,
        x: &Point3<f64>,
    ) -> nalgebra::Matrix3xX<f64> {
        let dim = 6 + self.dof_count;
        let mut jac = nalgebra::Matrix3xX::zeros(dim);
        let r = x - Point3::from(pose.translation);
        // d x / d omega = -skew(x - t)
        jac[(0, 1)] = r.z;
        jac[(0, 2)] = -r.y;
        jac[(1, 0)] = -r.z;
        jac[(1, 2)] = r.x;
        jac[(2, 0)] = r.y;
        jac[(2, 1)] = -r.x;
        // d x / d t = I
        for k in 0..3 {
            jac[(k, 3 + k)] = 1.0;
        }
        // Revolute ancestors: d x / d q_j = axis x (x - pivot).
        for &ji in &self.ancestor_joints[segment] {
            let j = &self.joints[ji];
            let v = fk.joint_axis_world[ji].cross(&(x - fk.joint_pivot_world[ji]));
            for k in 0..3 {
                jac[(k, 6 + j.dof)] = v[k];
            }
        }
        jac
    }
}

fn pose_config_to_isometry(pc: &PoseConfig) -> Isometry3<f64> {
    let rotation = UnitQuaternion::from_scaled_axis(Vector3::from(pc.rotation));
    Isometry3::from_parts(Translation3::from(Vector3::from(pc.translation)), rotation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// A minimal two-finger hand used across the tests.
    fn test_hand_toml() -> &'static str {
        r#"
            name = "pincer"
            palm = "palm"
            palm_offset = 0.06
            approach_axis = [0.0, 0.0, 1.0]

            [[segments]]
            name = "palm"
            shape = { kind = "box", half_extents = [0.03, 0.02, 0.01] }

            [[segments]]
            name = "left"
            shape = { kind = "capsule", radius = 0.006, half_length = 0.015 }
            shape_pose = { translation = [0.0, 0.0, 0.021] }

            [[segments]]
            name = "right"
            shape = { kind = "capsule", radius = 0.006, half_length = 0.015 }
            shape_pose = { translation = [0.0, 0.0, 0.021] }

            [[joints]]
            name = "left_flex"
            parent = "palm"
            child = "left"
            origin = { translation = [0.024, 0.0, 0.01] }
            axis = [0.0, -1.0, 0.0]
            limits = [-0.3, 2.0]
            dof = 0
            open = 0.0
            closing = 1.0

            [[joints]]
            name = "right_flex"
            parent = "palm"
            child = "right"
            origin = { translation = [-0.024, 0.0, 0.01] }
            axis = [0.0, 1.0, 0.0]
            limits = [-0.3, 2.0]
            dof = 1
            open = 0.0
            closing = 1.0

            [thumb]
            segment = "right"
            point = [0.006, 0.0, 0.03]

            [[contact_sites]]
            segment = "left"
            point = [-0.006, 0.0, 0.03]

            [[contact_sites]]
            segment = "right"
            point = [0.006, 0.0, 0.03]
        "#
    }

    fn test_hand() -> HandModel {
        let config: HandConfig = toml::from_str(test_hand_toml()).unwrap();
        HandModel::from_config(&config, None, 20).unwrap()
    }

    fn identity_pose(hand: &HandModel) -> HandPose {
        hand.open_pose(UnitQuaternion::identity(), Vector3::zeros())
    }

    #[test]
    fn builtin_hands_have_expected_dof_counts() {
        for (name, dofs, min_segments) in [
            ("barrett-like", 4, 5),
            ("allegro-like", 16, 17),
            ("human-like", 20, 21),
        ] {
            let hand = HandModel::builtin(name, 16).unwrap();
            assert_eq!(hand.dof_count(), dofs, "{name}");
            assert_eq!(hand.joints().len(), dofs, "{name}: one joint per DOF");
            assert!(hand.segments().len() >= min_segments, "{name}");
            assert!(!hand.contact_sites().is_empty(), "{name}");
        }
        assert!(HandModel::builtin("no-such-hand", 16).is_err());
    }

    #[test]
    fn translation_moves_all_segments_rigidly() {
        let hand = test_hand();
        let base = identity_pose(&hand);
        let mut moved = base.clone();
        moved.translation = Vector3::new(0.1, -0.2, 0.3);
        let fk0 = hand.forward_kinematics(&base);
        let fk1 = hand.forward_kinematics(&moved);
        for s in 0..hand.segments().len() {
            let d = fk1.segment_world[s].translation.vector - fk0.segment_world[s].translation.vector;
            assert_relative_eq!(d.x, 0.1, epsilon = 1e-12);
            assert_relative_eq!(d.y, -0.2, epsilon = 1e-12);
            assert_relative_eq!(d.z, 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn joint_motion_moves_only_its_subtree() {
        let hand = test_hand();
        let base = identity_pose(&hand);
        let mut bent = base.clone();
        bent.joints[0] = 0.8;
        let fk0 = hand.forward_kinematics(&base);
        let fk1 = hand.forward_kinematics(&bent);
        let palm = hand.palm_index();
        assert_relative_eq!(
            (fk1.segment_world[palm].translation.vector - fk0.segment_world[palm].translation.vector).norm(),
            0.0,
            epsilon = 1e-15
        );
        // Right finger (dof 1) is untouched.
        let right = 2;
        assert!(
            (fk1.segment_world[right].translation.vector
                - fk0.segment_world[right].translation.vector)
                .norm()
                < 1e-15
        );
        // Left finger moved.
        let left = 1;
        let tip0 = fk0.shape_world[left] * Point3::new(0.0, 0.0, 0.015);
        let tip1 = fk1.shape_world[left] * Point3::new(0.0, 0.0, 0.015);
        assert!((tip1 - tip0).norm() > 0.01);
    }

    #[test]
    fn closing_joint_brings_fingertips_together() {
        let hand = test_hand();
        let mut pose = identity_pose(&hand);
        let fk_open = hand.forward_kinematics(&pose);
        let gap_open = (hand.thumb_point_world(&fk_open)
            - (fk_open.shape_world[1] * Point3::new(-0.006, 0.0, 0.03)))
        .norm();
        pose.joints[0] = 1.0;
        pose.joints[1] = 1.0;
        let fk_closed = hand.forward_kinematics(&pose);
        let gap_closed = (hand.thumb_point_world(&fk_closed)
            - (fk_closed.shape_world[1] * Point3::new(-0.006, 0.0, 0.03)))
        .norm();
        assert!(
            gap_closed < gap_open,
            "closing both fingers should shrink the tip gap ({gap_open} -> {gap_closed})"
        );
    }

    #[test]
    fn closest_segment_ties_break_to_lowest_index() {
        let hand = test_hand();
        let pose = identity_pose(&hand);
        let fk = hand.forward_kinematics(&pose);
        // A point on the symmetry plane is equidistant from both fingers but
        // much closer to them than to the palm top? The palm box reaches z=0.01;
        // pick a point above it, between the fingers at their tip height.
        let p = Point3::new(0.0, 0.0, 0.031);
        let (k, _) = hand.closest_segment(&fk, &p);
        let d_left = hand.segment_sdf(&fk, 1, &p).value;
        let d_right = hand.segment_sdf(&fk, 2, &p).value;
        assert_relative_eq!(d_left, d_right, epsilon = 1e-12);
        assert_eq!(k, 1, "tie must resolve to the lower segment index");
    }

    #[test]
    fn point_jacobian_matches_finite_differences() {
        let hand = test_hand();
        let mut pose = identity_pose(&hand);
        pose.rotation = UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.2, 0.5));
        pose.translation = Vector3::new(0.05, 0.02, -0.04);
        pose.joints[0] = 0.4;
        pose.joints[1] = 0.9;

        let segment = 1;
        let local = Point3::new(0.004, -0.002, 0.028);
        let fk = hand.forward_kinematics(&pose);
        let x = fk.segment_world[segment] * local;
        let jac = hand.point_jacobian(&fk, &pose, segment, &x);

        let eps = 1e-7;
        let dim = pose.tangent_dim();
        for col in 0..dim {
            let mut step = DVector::zeros(dim);
            step[col] = eps;
            // Bypass clamping: probe the raw manifold step.
            let plus = raw_step(&pose, &step);
            step[col] = -eps;
            let minus = raw_step(&pose, &step);
            let fp = hand.forward_kinematics(&plus).segment_world[segment] * local;
            let fm = hand.forward_kinematics(&minus).segment_world[segment] * local;
            let fd = (fp - fm) / (2.0 * eps);
            for row in 0..3 {
                assert!(
                    (fd[row] - jac[(row, col)]).abs() < 1e-6,
                    "col {col} row {row}: fd {} vs analytic {}",
                    fd[row],
                    jac[(row, col)]
                );
            }
        }
    }

    fn raw_step(pose: &HandPose, step: &DVector<f64>) -> HandPose {
        let omega = Vector3::new(step[0], step[1], step[2]);
        let mut joints = pose.joints.clone();
        for k in 0..joints.len() {
            joints[k] += step[6 + k];
        }
        HandPose {
            rotation: UnitQuaternion::from_scaled_axis(omega) * pose.rotation,
            translation: pose.translation + Vector3::new(step[3], step[4], step[5]),
            joints,
        }
    }

    #[test]
    fn apply_step_clamps_joints() {
        let hand = test_hand();
        let pose = identity_pose(&hand);
        let mut step = DVector::zeros(pose.tangent_dim());
        step[6] = 100.0;
        step[7] = -100.0;
        let out = hand.apply_step(&pose, &step);
        assert_eq!(out.joints[0], hand.joints()[0].upper);
        assert_eq!(out.joints[1], hand.joints()[1].lower);
    }

    #[test]
    fn check_points_lie_on_segment_surfaces() {
        let hand = HandModel::builtin("barrett-like", 30).unwrap();
        for seg in hand.segments() {
            assert!(!seg.check_points.is_empty());
            for p in &seg.check_points {
                let local = seg.shape_pose.inverse_transform_point(p);
                let d = seg.shape.sample(&local).value;
                assert!(d.abs() < 1e-9, "{}: check point {p:?} off surface by {d}", seg.name);
            }
            assert!(!seg.closing_probes.is_empty());
        }
    }

    #[test]
    fn contact_site_normals_are_unit_outward() {
        let hand = HandModel::builtin("barrett-like", 30).unwrap();
        for site in hand.contact_sites() {
            assert_relative_eq!(site.normal.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn config_validation_catches_structural_errors() {
        let base = test_hand_toml();
        // Duplicate DOF index.
        let bad = base.replace("dof = 1", "dof = 0");
        let config: HandConfig = toml::from_str(&bad).unwrap();
        assert!(HandModel::from_config(&config, None, 8).is_err());

        // Inverted limits.
        let bad = base.replace("limits = [-0.3, 2.0]", "limits = [2.0, -0.3]");
        let config: HandConfig = toml::from_str(&bad).unwrap();
        assert!(HandModel::from_config(&config, None, 8).is_err());

        // Unknown child segment.
        let bad = base.replace("child = \"right\"", "child = \"missing\"");
        let config: HandConfig = toml::from_str(&bad).unwrap();
        assert!(HandModel::from_config(&config, None, 8).is_err());

        // Thumb point far off the surface.
        let bad = base.replace("point = [0.006, 0.0, 0.03]", "point = [0.1, 0.0, 0.03]");
        let config: HandConfig = toml::from_str(&bad).unwrap();
        assert!(HandModel::from_config(&config, None, 8).is_err());

        // Bad closing flag.
        let bad = base.replace("closing = 1.0", "closing = 0.5");
        let config: HandConfig = toml::from_str(&bad).unwrap();
        assert!(HandModel::from_config(&config, None, 8).is_err());
    }

    #[test]
    fn disconnected_segment_is_rejected() {
        let extra = r#"
            [[segments]]
            name = "floating"
            shape = { kind = "sphere", radius = 0.005 }
        "#;
        let text = format!("{}\n{}", test_hand_toml(), extra);
        let config: HandConfig = toml::from_str(&text).unwrap();
        assert!(HandModel::from_config(&config, None, 8).is_err());
    }

    #[test]
    fn adjacency_covers_exactly_joint_pairs() {
        let hand = test_hand();
        assert!(hand.is_adjacent(0, 1));
        assert!(hand.is_adjacent(0, 2));
        assert!(!hand.is_adjacent(1, 2));
    }

    #[test]
    fn hand_pose_serde_round_trip() {
        let hand = test_hand();
        let mut pose = identity_pose(&hand);
        pose.rotation = UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.2, -0.3));
        pose.translation = Vector3::new(1.0, 2.0, 3.0);
        pose.joints[0] = 0.5;
        let json = serde_json::to_string(&pose).unwrap();
        let back: HandPose = serde_json::from_str(&json).unwrap();
        assert_eq!(pose, back);
    }

    #[test]
    fn open_pose_respects_limits() {
        for name in config::builtin_names() {
            let hand = HandModel::builtin(name, 8).unwrap();
            let pose = hand.open_pose(UnitQuaternion::identity(), Vector3::zeros());
            for j in hand.joints() {
                let v = pose.joints[j.dof];
                assert!(v >= j.lower && v <= j.upper, "{name} joint {}", j.name);
            }
        }
    }

    /// The pruned query is an optimization only: winner and sample must be
    /// identical to the exhaustive scan everywhere.
    #[test]
    fn bounded_closest_segment_matches_full_scan() {
        use rand::{Rng, SeedableRng};
        let hand = HandModel::builtin("allegro-like", 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        for _ in 0..5 {
            let mut pose = hand.open_pose(
                UnitQuaternion::from_scaled_axis(Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )),
                Vector3::new(
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                ),
            );
            for j in hand.joints() {
                pose.joints[j.dof] = rng.random_range(j.lower..=j.upper);
            }
            let fk = hand.forward_kinematics(&pose);
            let bounds = hand.segment_bounds(&fk);
            for _ in 0..200 {
                let p = Point3::new(
                    rng.random_range(-0.25..0.25),
                    rng.random_range(-0.25..0.25),
                    rng.random_range(-0.25..0.25),
                );
                let (k_full, s_full) = hand.closest_segment(&fk, &p);
                let (k_fast, s_fast) = hand.closest_segment_bounded(&fk, &bounds, &p);
                assert_eq!(k_full, k_fast, "at {p:?}");
                assert_eq!(s_full.value, s_fast.value);
                assert_eq!(s_full.region, s_fast.region);
            }
        }
    }
}
