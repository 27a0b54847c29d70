//! The grasp objective: a sum-of-squares residual system over a contact map,
//! a thumb-contact prior, and intersection penalties, with analytic
//! Jacobians for least-squares refinement.
//!
//! The objective decomposes as `L = L_grasp + L_thumb + L_int`:
//!
//! * **Grasp term** — each attractive contact point pulls its nearest hand
//!   segment onto itself (residual proportional to the segment distance);
//!   each repulsive point pushes the nearest segment away with a bounded
//!   hinge that only engages while a hand part sits *directly above* the
//!   point (normal-alignment gate) and within the repulsion margin.
//! * **Thumb term** — the designated thumb point is drawn onto the object
//!   surface.
//! * **Intersection term** — penetration depths of segment check points into
//!   the object and into non-adjacent segments.
//!
//! Nearest-segment assignments, gate decisions, and hinge activations are
//! *frozen* into a row set ([`RowKind`]) when a pose is assembled; the frozen
//! rows are smooth functions of the pose (up to SDF cell boundaries, tracked
//! by [`RowSignature`]), which is what the optimizer differentiates.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::contact::ContactMap;
use crate::error::{Error, Result};
use crate::hand::{FkResult, HandModel, HandPose};
use crate::object::ObjectModel;

/// Weights and gates of the grasp objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Weight of attractive contact-point residuals.
    pub attractive_weight: f64,
    /// Weight of repulsive contact-point residuals.
    pub repulsive_weight: f64,
    /// Weight of the thumb-contact residual.
    pub thumb_weight: f64,
    /// Weight of intersection (penetration) residuals.
    pub intersection_weight: f64,
    /// Normal-alignment gate threshold in (0,1): a repulsive point only
    /// repels when |grad_hat . n| strictly exceeds this.
    pub normal_gate: f64,
    /// Repulsion margin delta_r (metres): hinge support of the repulsive
    /// term.
    pub repulsion_margin: f64,
    /// Intersection check points generated per hand segment at load time.
    pub check_points_per_segment: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            attractive_weight: 150.0,
            repulsive_weight: 20.0,
            thumb_weight: 25.0,
            intersection_weight: 100.0,
            normal_gate: 0.7,
            repulsion_margin: 0.01,
            check_points_per_segment: 50,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("attractive_weight", self.attractive_weight),
            ("repulsive_weight", self.repulsive_weight),
            ("thumb_weight", self.thumb_weight),
            ("intersection_weight", self.intersection_weight),
        ];
        for (name, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid("objective config", format!("{name} = {w}")));
            }
        }
        if !(self.normal_gate > 0.0 && self.normal_gate < 1.0) {
            return Err(Error::invalid(
                "objective config",
                format!("normal_gate = {} outside (0,1)", self.normal_gate),
            ));
        }
        if !(self.repulsion_margin > 0.0) {
            return Err(Error::invalid(
                "objective config",
                format!("repulsion_margin = {}", self.repulsion_margin),
            ));
        }
        if self.check_points_per_segment == 0 {
            return Err(Error::invalid(
                "objective config",
                "check_points_per_segment = 0",
            ));
        }
        Ok(())
    }
}

/// Identity of one residual row; also the frozen activation record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    /// Attractive contact point `point` against hand segment `segment`.
    Attractive { point: u32, segment: u32 },
    /// Gated repulsive contact point against its nearest segment.
    Repulsive { point: u32, segment: u32 },
    /// The thumb point against the object surface.
    Thumb,
    /// Check point `check` of `segment` penetrating the object.
    ObjectIntersection { segment: u32, check: u32 },
    /// Check point `check` of `segment` penetrating non-adjacent `other`.
    SelfIntersection { segment: u32, check: u32, other: u32 },
}

/// Smoothness fingerprint of a row at a pose: two evaluations with equal
/// signatures lie in the same analytic piece of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RowSignature {
    pub kind: RowKind,
    /// SDF region code (grid cell or primitive branch) of the row's sample.
    pub region: u64,
    /// Whether the SDF sample was extrapolated outside its grid extent.
    pub clamped: bool,
}

/// One assembled residual row.
#[derive(Debug, Clone)]
pub struct Row {
    pub kind: RowKind,
    /// Weighted residual value (sqrt-weight times the signed term value).
    pub residual: f64,
    /// SDF world gradient pre-scaled so the Jacobian row is
    /// `scaled_gradient . d(point)/d(params)` (for self-intersection rows,
    /// minus the same product against the other segment's motion).
    pub scaled_gradient: Vector3<f64>,
    /// World point the row is evaluated at.
    pub point: Point3<f64>,
    pub signature: RowSignature,
}

/// Per-term sum of squared (weighted) residuals.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct TermStat {
    /// Number of rows contributing.
    pub count: usize,
    /// Sum of squared weighted residuals.
    pub sum: f64,
}

impl TermStat {
    fn add(&mut self, residual: f64) {
        self.count += 1;
        self.sum += residual * residual;
    }
}

/// Breakdown of one objective evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResidualReport {
    pub attractive: TermStat,
    pub repulsive: TermStat,
    pub thumb: TermStat,
    pub intersection: TermStat,
    /// Total objective; exactly the sum of the four term sums.
    pub total: f64,
    /// Per contact-point activation: true when the point contributes a row
    /// (always true for attractive points; gate-and-hinge for repulsive).
    pub contact_active: Vec<bool>,
}

impl ResidualReport {
    /// Grasp term alone (attractive + repulsive), the contact-consistency
    /// part of the objective.
    pub fn grasp_sum(&self) -> f64 {
        self.attractive.sum + self.repulsive.sum
    }
}

/// A fresh objective evaluation: frozen rows plus the report.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub rows: Vec<Row>,
    pub report: ResidualReport,
}

impl Assembly {
    pub fn objective(&self) -> f64 {
        self.report.total
    }

    pub fn kinds(&self) -> Vec<RowKind> {
        self.rows.iter().map(|r| r.kind).collect()
    }
}

/// Stacks the weighted residuals of a row set into a vector.
pub fn residual_vector(rows: &[Row]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|r| r.residual))
}

/// The grasp objective bound to one hand, object, and contact map.
pub struct GraspObjective<'a> {
    hand: &'a HandModel,
    object: &'a ObjectModel,
    contacts: &'a ContactMap,
    config: ObjectiveConfig,
    sqrt_attractive: f64,
    sqrt_repulsive: f64,
    sqrt_thumb: f64,
    sqrt_intersection: f64,
}

impl<'a> GraspObjective<'a> {
    pub fn new(
        hand: &'a HandModel,
        object: &'a ObjectModel,
        contacts: &'a ContactMap,
        config: ObjectiveConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(GraspObjective {
            hand,
            object,
            contacts,
            config,
            sqrt_attractive: config.attractive_weight.sqrt(),
            sqrt_repulsive: config.repulsive_weight.sqrt(),
            sqrt_thumb: config.thumb_weight.sqrt(),
            sqrt_intersection: config.intersection_weight.sqrt(),
        })
    }

    pub fn hand(&self) -> &HandModel {
        self.hand
    }

    pub fn object(&self) -> &ObjectModel {
        self.object
    }

    pub fn contacts(&self) -> &ContactMap {
        self.contacts
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    /// Number of pose parameters: 6 rigid + joint DOFs.
    pub fn param_count(&self) -> usize {
        6 + self.hand.dof_count()
    }

    /// Evaluates the objective at a pose with fresh activation (nearest
    /// segments, gates, hinges recomputed), producing the frozen row set and
    /// the report.
    pub fn assemble(&self, pose: &HandPose) -> Assembly {
        let fk = self.hand.forward_kinematics(pose);
        let bounds = self.hand.segment_bounds(&fk);
        let mut rows = Vec::with_capacity(self.contacts.len() + 64);
        let mut attractive = TermStat::default();
        let mut repulsive = TermStat::default();
        let mut thumb = TermStat::default();
        let mut intersection = TermStat::default();
        let mut contact_active = Vec::with_capacity(self.contacts.len());

        // Grasp term: one row per attractive point, one per active repulsive
        // point, each against its nearest segment at this pose.
        for (i, cp) in self.contacts.points().iter().enumerate() {
            let (k, s) = self.hand.closest_segment_bounded(&fk, &bounds, &cp.position);
            if cp.label == 1 {
                let residual = self.sqrt_attractive * s.value;
                attractive.add(residual);
                rows.push(Row {
                    kind: RowKind::Attractive {
                        point: i as u32,
                        segment: k as u32,
                    },
                    residual,
                    scaled_gradient: -self.sqrt_attractive * s.gradient,
                    point: cp.position,
                    signature: signature_of(
                        RowKind::Attractive {
                            point: i as u32,
                            segment: k as u32,
                        },
                        s.region,
                        s.clamped,
                    ),
                });
                contact_active.push(true);
            } else {
                let active = self.repulsive_gate_open(&s.gradient, &cp.normal)
                    && self.config.repulsion_margin - s.value > 0.0;
                if active {
                    let residual = self.sqrt_repulsive * (self.config.repulsion_margin - s.value);
                    repulsive.add(residual);
                    rows.push(Row {
                        kind: RowKind::Repulsive {
                            point: i as u32,
                            segment: k as u32,
                        },
                        residual,
                        scaled_gradient: self.sqrt_repulsive * s.gradient,
                        point: cp.position,
                        signature: signature_of(
                            RowKind::Repulsive {
                                point: i as u32,
                                segment: k as u32,
                            },
                            s.region,
                            s.clamped,
                        ),
                    });
                }
                contact_active.push(active);
            }
        }

        // Thumb term: always one row.
        {
            let x = self.hand.thumb_point_world(&fk);
            let s = self.object.sample_sdf(&x);
            let residual = self.sqrt_thumb * s.value;
            thumb.add(residual);
            rows.push(Row {
                kind: RowKind::Thumb,
                residual,
                scaled_gradient: self.sqrt_thumb * s.gradient,
                point: x,
                signature: signature_of(RowKind::Thumb, s.region, s.clamped),
            });
        }

        // Hand-object intersection: active where check points penetrate.
        for (j, seg) in self.hand.segments().iter().enumerate() {
            for (c, local) in seg.check_points.iter().enumerate() {
                let x = fk.segment_world[j] * local;
                let s = self.object.sample_sdf(&x);
                if s.value < 0.0 {
                    let kind = RowKind::ObjectIntersection {
                        segment: j as u32,
                        check: c as u32,
                    };
                    let residual = self.sqrt_intersection * (-s.value);
                    intersection.add(residual);
                    rows.push(Row {
                        kind,
                        residual,
                        scaled_gradient: -self.sqrt_intersection * s.gradient,
                        point: x,
                        signature: signature_of(kind, s.region, s.clamped),
                    });
                }
            }
        }

        // Self-intersection over non-adjacent segment pairs, bounding-sphere
        // pruned: a check point of j can only be inside k when the spheres
        // overlap.
        let n_seg = self.hand.segments().len();
        for j in 0..n_seg {
            for k in 0..n_seg {
                if j == k || self.hand.is_adjacent(j, k) || !spheres_overlap(&fk, self.hand, j, k)
                {
                    continue;
                }
                for (c, local) in self.hand.segments()[j].check_points.iter().enumerate() {
                    let x = fk.segment_world[j] * local;
                    let s = self.hand.segment_sdf(&fk, k, &x);
                    if s.value < 0.0 {
                        let kind = RowKind::SelfIntersection {
                            segment: j as u32,
                            check: c as u32,
                            other: k as u32,
                        };
                        let residual = self.sqrt_intersection * (-s.value);
                        intersection.add(residual);
                        rows.push(Row {
                            kind,
                            residual,
                            scaled_gradient: -self.sqrt_intersection * s.gradient,
                            point: x,
                            signature: signature_of(kind, s.region, s.clamped),
                        });
                    }
                }
            }
        }

        let total = attractive.sum + repulsive.sum + thumb.sum + intersection.sum;
        Assembly {
            rows,
            report: ResidualReport {
                attractive,
                repulsive,
                thumb,
                intersection,
                total,
                contact_active,
            },
        }
    }

    /// Objective value and report at a pose (fresh activation).
    pub fn evaluate(&self, pose: &HandPose) -> (f64, ResidualReport) {
        let a = self.assemble(pose);
        (a.report.total, a.report)
    }

    /// Re-evaluates a frozen row set at a pose. Gates and hinges are *not*
    /// re-applied: each row is the smooth branch it was frozen on, so the
    /// result is differentiable wherever the signatures are stable.
    pub fn frozen_rows(&self, pose: &HandPose, kinds: &[RowKind]) -> Vec<Row> {
        let fk = self.hand.forward_kinematics(pose);
        kinds
            .iter()
            .map(|&kind| self.eval_frozen_row(&fk, kind))
            .collect()
    }

    fn eval_frozen_row(&self, fk: &FkResult, kind: RowKind) -> Row {
        match kind {
            RowKind::Attractive { point, segment } => {
                let p = self.contacts.points()[point as usize].position;
                let s = self.hand.segment_sdf(fk, segment as usize, &p);
                Row {
                    kind,
                    residual: self.sqrt_attractive * s.value,
                    scaled_gradient: -self.sqrt_attractive * s.gradient,
                    point: p,
                    signature: signature_of(kind, s.region, s.clamped),
                }
            }
            RowKind::Repulsive { point, segment } => {
                let p = self.contacts.points()[point as usize].position;
                let s = self.hand.segment_sdf(fk, segment as usize, &p);
                Row {
                    kind,
                    residual: self.sqrt_repulsive * (self.config.repulsion_margin - s.value),
                    scaled_gradient: self.sqrt_repulsive * s.gradient,
                    point: p,
                    signature: signature_of(kind, s.region, s.clamped),
                }
            }
            RowKind::Thumb => {
                let x = self.hand.thumb_point_world(fk);
                let s = self.object.sample_sdf(&x);
                Row {
                    kind,
                    residual: self.sqrt_thumb * s.value,
                    scaled_gradient: self.sqrt_thumb * s.gradient,
                    point: x,
                    signature: signature_of(kind, s.region, s.clamped),
                }
            }
            RowKind::ObjectIntersection { segment, check } => {
                let local = self.hand.segments()[segment as usize].check_points[check as usize];
                let x = fk.segment_world[segment as usize] * local;
                let s = self.object.sample_sdf(&x);
                Row {
                    kind,
                    residual: self.sqrt_intersection * (-s.value),
                    scaled_gradient: -self.sqrt_intersection * s.gradient,
                    point: x,
                    signature: signature_of(kind, s.region, s.clamped),
                }
            }
            RowKind::SelfIntersection {
                segment,
                check,
                other,
            } => {
                let local = self.hand.segments()[segment as usize].check_points[check as usize];
                let x = fk.segment_world[segment as usize] * local;
                let s = self.hand.segment_sdf(fk, other as usize, &x);
                Row {
                    kind,
                    residual: self.sqrt_intersection * (-s.value),
                    scaled_gradient: -self.sqrt_intersection * s.gradient,
                    point: x,
                    signature: signature_of(kind, s.region, s.clamped),
                }
            }
        }
    }

    /// Analytic Jacobian of the weighted residuals of `rows` with respect to
    /// the pose tangent, evaluated at `pose` (which must be the pose the rows
    /// were computed at).
    pub fn jacobian(&self, pose: &HandPose, rows: &[Row]) -> DMatrix<f64> {
        let fk = self.hand.forward_kinematics(pose);
        let dim = self.param_count();
        let mut jac = DMatrix::zeros(rows.len(), dim);
        for (r, row) in rows.iter().enumerate() {
            match row.kind {
                RowKind::Attractive { segment, .. }
                | RowKind::Repulsive { segment, .. }
                | RowKind::ObjectIntersection { segment, .. } => {
                    let jp = self
                        .hand
                        .point_jacobian(&fk, pose, segment as usize, &row.point);
                    add_row(&mut jac, r, &row.scaled_gradient, &jp, 1.0);
                }
                RowKind::Thumb => {
                    let jp = self.hand.point_jacobian(
                        &fk,
                        pose,
                        self.hand.thumb_segment(),
                        &row.point,
                    );
                    add_row(&mut jac, r, &row.scaled_gradient, &jp, 1.0);
                }
                RowKind::SelfIntersection { segment, other, .. } => {
                    // The residual depends on the relative motion of the
                    // check point and the other segment's distance field.
                    let jp = self
                        .hand
                        .point_jacobian(&fk, pose, segment as usize, &row.point);
                    add_row(&mut jac, r, &row.scaled_gradient, &jp, 1.0);
                    let jo = self
                        .hand
                        .point_jacobian(&fk, pose, other as usize, &row.point);
                    add_row(&mut jac, r, &row.scaled_gradient, &jo, -1.0);
                }
            }
        }
        jac
    }

    /// Whether a repulsive point's gate is open: the (normalized) SDF
    /// gradient at the point aligns with the surface normal more strongly
    /// than the gate threshold (strict), meaning a hand part sits directly
    /// above the point rather than beside it.
    fn repulsive_gate_open(&self, gradient: &Vector3<f64>, normal: &Vector3<f64>) -> bool {
        let gn = gradient.norm();
        let nn = normal.norm();
        if gn < 1e-12 || nn < 1e-12 {
            return false;
        }
        (gradient.dot(normal) / (gn * nn)).abs() > self.config.normal_gate
    }
}

fn signature_of(kind: RowKind, region: u64, clamped: bool) -> RowSignature {
    RowSignature {
        kind,
        region,
        clamped,
    }
}

fn add_row(
    jac: &mut DMatrix<f64>,
    r: usize,
    g: &Vector3<f64>,
    point_jac: &nalgebra::Matrix3xX<f64>,
    sign: f64,
) {
    for c in 0..point_jac.ncols() {
        let v = g.x * point_jac[(0, c)] + g.y * point_jac[(1, c)] + g.z * point_jac[(2, c)];
        jac[(r, c)] += sign * v;
    }
}

fn spheres_overlap(fk: &FkResult, hand: &HandModel, j: usize, k: usize) -> bool {
    let cj = fk.shape_world[j].translation.vector;
    let ck = fk.shape_world[k].translation.vector;
    let rj = hand.segments()[j].shape.bounding_radius();
    let rk = hand.segments()[k].shape.bounding_radius();
    (cj - ck).norm() <= rj + rk
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{ContactPoint, LabelledRegion, Region};
    use crate::geometry::{sample_surface, shapes, GridBuildParams};
    use crate::hand::config::HandConfig;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    /// A one-segment "hand": a sphere of radius 0.02 at the palm origin.
    /// With no joints, the parameter space is the 6-DOF rigid pose alone.
    fn sphere_hand() -> HandModel {
        let toml_text = r#"
            name = "probe"
            palm = "ball"
            palm_offset = 0.05
            approach_axis = [0.0, 0.0, 1.0]
            joints = []
            thumb = { segment = "ball", point = [0.0, 0.0, 0.02] }

            [[segments]]
            name = "ball"
            shape = { kind = "sphere", radius = 0.02 }

            [[contact_sites]]
            segment = "ball"
            point = [0.02, 0.0, 0.0]
        "#;
        let config: HandConfig = toml::from_str(toml_text).unwrap();
        HandModel::from_config(&config, None, 16).unwrap()
    }

    /// Two-finger articulated hand reused for Jacobian and oracle tests.
    fn pincer_hand() -> HandModel {
        let toml_text = r#"
            name = "pincer"
            palm = "palm"
            palm_offset = 0.06
            approach_axis = [0.0, 0.0, 1.0]
            thumb = { segment = "right", point = [0.006, 0.0, 0.03] }

            [[segments]]
            name = "palm"
            shape = { kind = "box", half_extents = [0.03, 0.015, 0.01] }

            [[segments]]
            name = "left"
            shape = { kind = "capsule", radius = 0.006, half_length = 0.015 }
            shape_pose = { translation = [0.0, 0.0, 0.018] }

            [[segments]]
            name = "right"
            shape = { kind = "capsule", radius = 0.006, half_length = 0.015 }
            shape_pose = { translation = [0.0, 0.0, 0.018] }

            [[joints]]
            name = "left_flex"
            parent = "palm"
            child = "left"
            origin = { translation = [-0.025, 0.0, 0.01] }
            axis = [0.0, 1.0, 0.0]
            limits = [-0.3, 1.6]
            dof = 0
            open = 0.0
            closing = 1.0

            [[joints]]
            name = "right_flex"
            parent = "palm"
            child = "right"
            origin = { translation = [0.025, 0.0, 0.01] }
            axis = [0.0, -1.0, 0.0]
            limits = [-0.3, 1.6]
            dof = 1
            open = 0.0
            closing = 1.0

            [[contact_sites]]
            segment = "left"
            point = [0.006, 0.0, 0.025]

            [[contact_sites]]
            segment = "right"
            point = [-0.006, 0.0, 0.025]
        "#;
        let config: HandConfig = toml::from_str(toml_text).unwrap();
        HandModel::from_config(&config, None, 24).unwrap()
    }

    fn sphere_object() -> ObjectModel {
        let mesh = shapes::icosphere(0.03, 3);
        ObjectModel::new(mesh, &GridBuildParams::with_spacing(0.002), 400, 11).unwrap()
    }

    fn single_point_map(position: Point3<f64>, normal: Vector3<f64>, label: i8) -> ContactMap {
        ContactMap::from_labelled_points(
            [ContactPoint {
                position,
                normal,
                label,
            }],
            0.3,
            "test",
        )
        .unwrap()
    }

    fn far_pose(hand: &HandModel) -> HandPose {
        hand.open_pose(UnitQuaternion::identity(), Vector3::new(10.0, 0.0, 0.0))
    }

    /// One attractive point 0.01 m from the segment surface contributes
    /// weight * distance^2 to the grasp term.
    #[test]
    fn attractive_point_value_is_weighted_squared_distance() {
        let hand = sphere_hand();
        let object = sphere_object();
        // Hand ball at origin; point at |p| = 0.03 is 0.01 outside the 0.02
        // sphere.
        let map = single_point_map(Point3::new(0.03, 0.0, 0.0), Vector3::x(), 1);
        let obj = GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();
        // Keep the hand far from the object so only the grasp term is
        // nontrivial, then move it to the origin for the measurement.
        let mut pose = far_pose(&hand);
        pose.translation = Vector3::zeros();
        let (_, report) = obj.evaluate(&pose);
        // Map positions are snapped to f32 at construction, which perturbs
        // the distance by ~1e-9 m (relative ~1e-7 on the squared sum).
        assert_relative_eq!(report.attractive.sum, 150.0 * 1e-4, max_relative = 1e-6);
        assert_eq!(report.attractive.count, 1);
        assert_eq!(report.repulsive.count, 0);
    }

    /// A point exactly on the segment surface contributes zero.
    #[test]
    fn attractive_point_on_surface_is_zero() {
        let hand = sphere_hand();
        let object = sphere_object();
        let map = single_point_map(Point3::new(0.02, 0.0, 0.0), Vector3::x(), 1);
        let obj = GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();
        let mut pose = far_pose(&hand);
        pose.translation = Vector3::zeros();
        let (_, report) = obj.evaluate(&pose);
        // Not exactly zero: the stored point is the f32 rounding of 0.02.
        assert!(report.attractive.sum.abs() < 1e-15, "{}", report.attractive.sum);
    }

    /// Repulsion truth table: the gate needs the SDF gradient aligned with
    /// the contact normal (strictly above threshold) *and* the hinge needs
    /// the segment within the margin.
    #[test]
    fn repulsive_gate_and_hinge_truth_table() {
        let hand = sphere_hand();
        let object = sphere_object();
        let cfg = ObjectiveConfig::default();
        let mut pose = far_pose(&hand);
        pose.translation = Vector3::zeros();

        // Ball surface at x = 0.02; point 5 mm outside it. Gradient there is
        // +x (radial).
        let p = Point3::new(0.025, 0.0, 0.0);

        // Aligned normal, within margin: active.
        let map = single_point_map(p, Vector3::x(), -1);
        let obj = GraspObjective::new(&hand, &object, &map, cfg).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_relative_eq!(
            report.repulsive.sum,
            20.0 * (0.01 - 0.005) * (0.01 - 0.005),
            max_relative = 1e-6
        );
        assert_eq!(report.repulsive.count, 1);
        assert_eq!(report.contact_active, vec![true]);

        // Perpendicular normal (hand part beside the point): inactive at any
        // distance.
        let map = single_point_map(p, Vector3::y(), -1);
        let obj = GraspObjective::new(&hand, &object, &map, cfg).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(report.repulsive.count, 0);
        assert_eq!(report.repulsive.sum, 0.0);
        assert_eq!(report.contact_active, vec![false]);

        // Anti-aligned normal: |.| makes the gate symmetric, so active.
        let map = single_point_map(p, -Vector3::x(), -1);
        let obj = GraspObjective::new(&hand, &object, &map, cfg).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(report.repulsive.count, 1);

        // Aligned but outside the margin: hinge support ends at delta_r.
        let far_point = single_point_map(Point3::new(0.035, 0.0, 0.0), Vector3::x(), -1);
        let obj = GraspObjective::new(&hand, &object, &far_point, cfg).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(report.repulsive.count, 0);
        assert_eq!(report.repulsive.sum, 0.0);

        // Exactly at the margin boundary: delta_r - sdf = 0 is not > 0. The
        // stored point is f32-snapped, so read the achieved distance back and
        // use it as the margin.
        let at_margin = single_point_map(Point3::new(0.03, 0.0, 0.0), Vector3::x(), -1);
        let achieved = at_margin.points()[0].position.coords.norm() - 0.02;
        let mut boundary_cfg = cfg;
        boundary_cfg.repulsion_margin = achieved;
        let obj = GraspObjective::new(&hand, &object, &at_margin, boundary_cfg).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(report.repulsive.count, 0, "sdf == margin must be inactive");
    }

    /// The gate comparison is strict: alignment exactly at the threshold
    /// stays closed.
    #[test]
    fn gate_boundary_is_strict() {
        let hand = sphere_hand();
        let object = sphere_object();
        let p = Point3::new(0.025, 0.0, 0.0);
        // An oblique unit-ish normal; the map snaps it to f32, so read the
        // alignment back through the same code path the gate uses.
        let map = single_point_map(p, Vector3::new(0.8, 0.6, 0.0), -1);
        let n = map.points()[0].normal;
        let align = (Vector3::x().dot(&n) / n.norm()).abs();

        let mut at_boundary = ObjectiveConfig::default();
        at_boundary.normal_gate = align;
        let obj = GraspObjective::new(&hand, &object, &map, at_boundary).unwrap();
        let mut pose = far_pose(&hand);
        pose.translation = Vector3::zeros();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(
            report.repulsive.count, 0,
            "alignment == gate must not activate (strict comparison)"
        );

        let mut below = at_boundary;
        below.normal_gate = align * 0.999;
        let obj = GraspObjective::new(&hand, &object, &map, below).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(report.repulsive.count, 1, "alignment > gate must activate");
    }

    /// Thumb residual against the object: 0.02 m off a 0.03 sphere gives
    /// 25 * 0.02^2 = 0.01, up to grid discretization of the object SDF.
    #[test]
    fn thumb_term_matches_hand_computation() {
        let hand = sphere_hand();
        let object = sphere_object();
        // Any far-away point keeps grasp terms clean (single dummy attractive
        // point pinned to the hand surface so its residual is ~0).
        let map = single_point_map(Point3::new(0.02, 0.0, 10.0), Vector3::x(), 1);
        let obj = GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();
        // Thumb point is (0,0,0.02) in the ball frame; put it 0.05 from the
        // object centre: sdf = 0.05 - 0.03 = 0.02.
        let mut pose = far_pose(&hand);
        pose.translation = Vector3::new(0.0, 0.0, 10.0);
        let dummy = obj.evaluate(&pose).1.thumb.sum; // far: clamped extrapolation
        assert!(dummy > 0.0);
        pose.translation = Vector3::new(0.0, 0.0, 0.03);
        let (_, report) = obj.evaluate(&pose);
        // Icosphere facets + trilinear interpolation budget.
        assert_relative_eq!(report.thumb.sum, 0.01, max_relative = 0.05);
        // Zero weight kills the term exactly.
        let mut no_thumb = ObjectiveConfig::default();
        no_thumb.thumb_weight = 0.0;
        let obj = GraspObjective::new(&hand, &object, &map, no_thumb).unwrap();
        let (_, report) = obj.evaluate(&pose);
        assert_eq!(report.thumb.sum, 0.0);
    }

    /// A check point at a known 5 mm penetration contributes 100 * 0.005^2.
    /// The box object's interior distance is linear near a face centre, so
    /// the grid reproduces it almost exactly.
    #[test]
    fn object_intersection_depth_is_squared_penetration() {
        let hand = sphere_hand();
        let mesh = shapes::box_mesh(Vector3::new(0.05, 0.05, 0.05));
        let object =
            ObjectModel::new(mesh, &GridBuildParams::with_spacing(0.0025), 200, 3).unwrap();
        let map = single_point_map(Point3::new(0.02, 0.0, 10.0), Vector3::x(), 1);
        let obj = GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();

        // Pick an actual check point of the ball segment and position the
        // hand so that this point lands 5 mm inside the +x face, well away
        // from edges.
        let local = hand.segments()[0].check_points[0];
        let target = Point3::new(0.045, 0.0, 0.0);
        let mut pose = far_pose(&hand);
        pose.translation = target - local;
        let kinds = vec![RowKind::ObjectIntersection {
            segment: 0,
            check: 0,
        }];
        let rows = obj.frozen_rows(&pose, &kinds);
        let expected = (100.0f64).sqrt() * 0.005;
        assert_relative_eq!(rows[0].residual, expected, max_relative = 1e-6);
    }

    /// Non-adjacent overlapping segments produce self-intersection rows;
    /// parent/child overlap at a joint never does.
    #[test]
    fn self_intersection_respects_adjacency() {
        // Chain: base - mid - tip, deliberately overlapping. The mid segment
        // is small and nearly coincident with both neighbours, so base/tip
        // (non-adjacent) interpenetrate.
        let toml_text = r#"
            name = "chain"
            palm = "base"
            palm_offset = 0.05
            approach_axis = [0.0, 0.0, 1.0]
            thumb = { segment = "base", point = [0.0, 0.0, 0.012] }

            [[segments]]
            name = "base"
            shape = { kind = "sphere", radius = 0.012 }

            [[segments]]
            name = "mid"
            shape = { kind = "sphere", radius = 0.004 }

            [[segments]]
            name = "tip"
            shape = { kind = "sphere", radius = 0.012 }

            [[joints]]
            name = "j0"
            parent = "base"
            child = "mid"
            origin = { translation = [0.008, 0.0, 0.0] }
            axis = [0.0, 0.0, 1.0]
            limits = [-1.0, 1.0]
            dof = 0
            open = 0.0
            closing = 1.0

            [[joints]]
            name = "j1"
            parent = "mid"
            child = "tip"
            origin = { translation = [0.008, 0.0, 0.0] }
            axis = [0.0, 0.0, 1.0]
            limits = [-1.0, 1.0]
            dof = 1
            open = 0.0
            closing = 1.0

            [[contact_sites]]
            segment = "tip"
            point = [0.012, 0.0, 0.0]
        "#;
        let config: HandConfig = toml::from_str(toml_text).unwrap();
        let hand = HandModel::from_config(&config, None, 32).unwrap();
        let object = sphere_object();
        let map = single_point_map(Point3::new(0.0, 0.0, 10.0), Vector3::x(), 1);
        let obj = GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();
        let pose = far_pose(&hand);
        let a = obj.assemble(&pose);
        let self_rows: Vec<_> = a
            .rows
            .iter()
            .filter(|r| matches!(r.kind, RowKind::SelfIntersection { .. }))
            .collect();
        assert!(
            !self_rows.is_empty(),
            "base and tip overlap (centres 0.016 apart, radii 0.012)"
        );
        for r in &self_rows {
            let (j, k) = match r.kind {
                RowKind::SelfIntersection { segment, other, .. } => (segment, other),
                _ => unreachable!(),
            };
            let adjacent = hand.is_adjacent(j as usize, k as usize);
            assert!(!adjacent, "adjacent pair ({j},{k}) must be excluded");
            assert!((j, k) == (0, 2) || (j, k) == (2, 0), "unexpected pair ({j},{k})");
        }
    }

    /// The production evaluator against a from-scratch reference: loop over
    /// every point and segment with no pruning, no row machinery.
    #[test]
    fn matches_naive_reference_evaluator() {
        let hand = pincer_hand();
        let mesh = shapes::cylinder_mesh(0.02, 0.12, 48);
        let object =
            ObjectModel::new(mesh.clone(), &GridBuildParams::with_spacing(0.003), 300, 5).unwrap();
        let samples = sample_surface(&mesh, 400, 21);
        let regions = vec![LabelledRegion {
            region: Region::Band {
                axis: [0.0, 0.0, 1.0],
                min: -0.03,
                max: 0.03,
            },
            label: 1,
        }];
        let map = ContactMap::from_regions(&samples, &regions, 0.3).unwrap();
        let cfg = ObjectiveConfig::default();
        let obj = GraspObjective::new(&hand, &object, &map, cfg).unwrap();

        // A handful of poses around the object, including touching ones.
        let poses = [
            hand.open_pose(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.09)),
            hand.open_pose(
                UnitQuaternion::from_scaled_axis(Vector3::new(1.2, 0.0, 0.0)),
                Vector3::new(0.03, 0.01, 0.02),
            ),
            hand.open_pose(
                UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 1.57, 0.3)),
                Vector3::new(-0.04, 0.0, 0.0),
            ),
        ];
        for (pi, base) in poses.iter().enumerate() {
            let mut pose = base.clone();
            pose.joints[0] = 0.9;
            pose.joints[1] = 0.4;
            let (total, report) = obj.evaluate(&pose);

            // Reference: direct transcription of the term definitions.
            let fk = hand.forward_kinematics(&pose);
            let wa = cfg.attractive_weight.sqrt();
            let wr = cfg.repulsive_weight.sqrt();
            let wt = cfg.thumb_weight.sqrt();
            let wi = cfg.intersection_weight.sqrt();
            let mut naive_att = 0.0;
            let mut naive_rep = 0.0;
            for cp in map.points() {
                let mut best = f64::INFINITY;
                let mut best_s = None;
                for k in 0..hand.segments().len() {
                    let s = hand.segment_sdf(&fk, k, &cp.position);
                    if s.value < best {
                        best = s.value;
                        best_s = Some(s);
                    }
                }
                let s = best_s.unwrap();
                if cp.label == 1 {
                    let r = wa * s.value;
                    naive_att += r * r;
                } else {
                    let align =
                        (s.gradient.normalize().dot(&cp.normal.normalize())).abs();
                    if align > cfg.normal_gate && s.value < cfg.repulsion_margin {
                        let r = wr * (cfg.repulsion_margin - s.value);
                        naive_rep += r * r;
                    }
                }
            }
            let rt = wt * object.sample_sdf(&hand.thumb_point_world(&fk)).value;
            let naive_thumb = rt * rt;
            let mut naive_int = 0.0;
            for (j, seg) in hand.segments().iter().enumerate() {
                for local in &seg.check_points {
                    let x = fk.segment_world[j] * local;
                    let d = object.sample_sdf(&x).value;
                    if d < 0.0 {
                        let r = wi * -d;
                        naive_int += r * r;
                    }
                    for k in 0..hand.segments().len() {
                        if k == j || hand.is_adjacent(j, k) {
                            continue;
                        }
                        let d = hand.segment_sdf(&fk, k, &x).value;
                        if d < 0.0 {
                            let r = wi * -d;
                            naive_int += r * r;
                        }
                    }
                }
            }
            let naive_total = naive_att + naive_rep + naive_thumb + naive_int;
            assert_relative_eq!(report.attractive.sum, naive_att, max_relative = 1e-12);
            assert_relative_eq!(report.repulsive.sum, naive_rep, max_relative = 1e-12);
            assert_relative_eq!(report.thumb.sum, naive_thumb, max_relative = 1e-12);
            assert_relative_eq!(report.intersection.sum, naive_int, max_relative = 1e-12);
            assert_relative_eq!(total, naive_total, max_relative = 1e-11);
            assert_relative_eq!(
                total,
                report.attractive.sum + report.repulsive.sum + report.thumb.sum
                    + report.intersection.sum,
                epsilon = 1e-15
            );
            assert_eq!(report.contact_active.len(), map.len(), "pose {pi}");
        }
    }

    /// Analytic Jacobian vs central finite differences of the frozen rows,
    /// on rows whose smoothness signature is stable across all probes.
    #[test]
    fn jacobian_matches_finite_differences() {
        let hand = pincer_hand();
        let mesh = shapes::cylinder_mesh(0.02, 0.12, 48);
        let object =
            ObjectModel::new(mesh.clone(), &GridBuildParams::with_spacing(0.003), 300, 5).unwrap();
        let samples = sample_surface(&mesh, 250, 33);
        let regions = vec![LabelledRegion {
            region: Region::Band {
                axis: [0.0, 0.0, 1.0],
                min: -0.04,
                max: 0.0,
            },
            label: 1,
        }];
        let map = ContactMap::from_regions(&samples, &regions, 0.3).unwrap();
        let obj =
            GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();

        let mut pose = hand.open_pose(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.2, -0.4, 0.1)),
            Vector3::new(0.01, 0.005, 0.08),
        );
        pose.joints[0] = 0.7;
        pose.joints[1] = 0.5;

        let assembly = obj.assemble(&pose);
        let kinds = assembly.kinds();
        let jac = obj.jacobian(&pose, &assembly.rows);
        let dim = obj.param_count();
        let eps = 1e-6;

        // Raw tangent step without joint clamping, to probe the smooth
        // branch itself.
        let raw_step = |pose: &HandPose, col: usize, delta: f64| {
            let mut p = pose.clone();
            match col {
                0..=2 => {
                    let mut omega = Vector3::zeros();
                    omega[col] = delta;
                    p.rotation = UnitQuaternion::from_scaled_axis(omega) * p.rotation;
                }
                3..=5 => p.translation[col - 3] += delta,
                _ => p.joints[col - 6] += delta,
            }
            p
        };

        let mut stable_rows = 0usize;
        let mut checked_entries = 0usize;
        for col in 0..dim {
            let plus = obj.frozen_rows(&raw_step(&pose, col, eps), &kinds);
            let minus = obj.frozen_rows(&raw_step(&pose, col, -eps), &kinds);
            for (r, _) in kinds.iter().enumerate() {
                if plus[r].signature != assembly.rows[r].signature
                    || minus[r].signature != assembly.rows[r].signature
                {
                    continue;
                }
                let fd = (plus[r].residual - minus[r].residual) / (2.0 * eps);
                let a = jac[(r, col)];
                let denom = a.abs().max(fd.abs()).max(1.0);
                assert!(
                    (a - fd).abs() / denom < 1e-4,
                    "row {r} ({:?}) col {col}: analytic {a} vs fd {fd}",
                    kinds[r]
                );
                checked_entries += 1;
                if col == 0 {
                    stable_rows += 1;
                }
            }
        }
        assert!(
            stable_rows * 10 >= kinds.len() * 8,
            "too few stable rows ({stable_rows}/{})",
            kinds.len()
        );
        assert!(checked_entries > 100);
    }

    /// Scaling a single weight by a power of four scales that term's sum
    /// exactly (the square root of the weight is exact for powers of four),
    /// and zero weight annihilates the term.
    #[test]
    fn term_sums_scale_exactly_with_weights() {
        let hand = pincer_hand();
        let object = sphere_object();
        let mesh = shapes::icosphere(0.03, 2);
        let samples = sample_surface(&mesh, 200, 2);
        let regions = vec![LabelledRegion {
            region: Region::Band {
                axis: [0.0, 0.0, 1.0],
                min: 0.0,
                max: 0.05,
            },
            label: 1,
        }];
        let map = ContactMap::from_regions(&samples, &regions, 0.3).unwrap();
        let base_cfg = ObjectiveConfig::default();
        let base = GraspObjective::new(&hand, &object, &map, base_cfg).unwrap();
        let pose = hand.open_pose(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.05));
        let (_, base_report) = base.evaluate(&pose);
        assert!(base_report.attractive.sum > 0.0);

        let mut scaled_cfg = base_cfg;
        scaled_cfg.attractive_weight *= 4.0;
        scaled_cfg.repulsive_weight *= 4.0;
        scaled_cfg.thumb_weight *= 4.0;
        scaled_cfg.intersection_weight *= 4.0;
        let scaled = GraspObjective::new(&hand, &object, &map, scaled_cfg).unwrap();
        let (_, scaled_report) = scaled.evaluate(&pose);
        assert_eq!(scaled_report.attractive.sum, 4.0 * base_report.attractive.sum);
        assert_eq!(scaled_report.repulsive.sum, 4.0 * base_report.repulsive.sum);
        assert_eq!(scaled_report.thumb.sum, 4.0 * base_report.thumb.sum);
        assert_eq!(
            scaled_report.intersection.sum,
            4.0 * base_report.intersection.sum
        );

        let mut zeroed = base_cfg;
        zeroed.attractive_weight = 0.0;
        let zero_obj = GraspObjective::new(&hand, &object, &map, zeroed).unwrap();
        let (_, zero_report) = zero_obj.evaluate(&pose);
        assert_eq!(zero_report.attractive.sum, 0.0);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = ObjectiveConfig::default();
        cfg.normal_gate = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ObjectiveConfig::default();
        cfg.attractive_weight = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ObjectiveConfig::default();
        cfg.repulsion_margin = 0.0;
        assert!(cfg.validate().is_err());
        assert!(ObjectiveConfig::default().validate().is_ok());
    }

    /// Frozen re-evaluation at the assembly pose reproduces the assembly.
    #[test]
    fn frozen_rows_agree_with_assembly_at_same_pose() {
        let hand = pincer_hand();
        let object = sphere_object();
        let mesh = shapes::icosphere(0.03, 2);
        let samples = sample_surface(&mesh, 150, 8);
        let regions = vec![LabelledRegion {
            region: Region::Band {
                axis: [1.0, 0.0, 0.0],
                min: -0.01,
                max: 0.03,
            },
            label: 1,
        }];
        let map = ContactMap::from_regions(&samples, &regions, 0.3).unwrap();
        let obj =
            GraspObjective::new(&hand, &object, &map, ObjectiveConfig::default()).unwrap();
        let pose = hand.open_pose(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.055));
        let a = obj.assemble(&pose);
        let frozen = obj.frozen_rows(&pose, &a.kinds());
        for (x, y) in a.rows.iter().zip(&frozen) {
            assert_eq!(x.residual, y.residual);
            assert_eq!(x.signature, y.signature);
        }
    }
}
