//! Contact-agnostic grasp candidate generation.
//!
//! Candidates start as coarse seeds `(approach point, roll, standoff)` over
//! the object surface, become full poses by aligning the palm's approach
//! axis against the surface normal, and are diversified by simulated
//! annealing of a contact energy (with finger closing before every energy
//! evaluation, so energies always compare closed grasps). The best two
//! distinct poses per seed survive into refinement.

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::hand::{HandModel, HandPose};
use crate::object::ObjectModel;

/// Roll angles of the seed grammar (radians).
pub const ROLL_ANGLES: [f64; 4] = [
    0.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::PI,
    3.0 * std::f64::consts::FRAC_PI_2,
];

/// Standoff distances of the seed grammar (metres).
pub const STANDOFFS: [f64; 4] = [0.0, 0.01, 0.02, 0.03];

/// Misalignment weight of the contact energy (metres per unit of
/// misalignment).
pub const ALIGNMENT_WEIGHT: f64 = 0.05;

/// A site penetrating deeper than this caps the whole energy.
pub const PENETRATION_CAP_DEPTH: f64 = 0.01;

/// Finite stand-in for an unusable (deeply penetrating) configuration.
pub const ENERGY_CAP: f64 = 1e6;

/// A coarse grasp seed: approach point on the surface, palm roll about the
/// approach axis, and standoff from the surface.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GraspSeed {
    /// Approach point on the object surface.
    pub approach_point: [f64; 3],
    /// Outward surface normal at the approach point.
    pub approach_normal: [f64; 3],
    /// Roll about the approach axis; one of [`ROLL_ANGLES`].
    pub roll: f64,
    /// Surface standoff in metres; one of [`STANDOFFS`].
    pub standoff: f64,
    /// Flat index in the generated seed list; also selects the rng stream.
    pub index: usize,
}

impl GraspSeed {
    pub fn point(&self) -> Point3<f64> {
        Point3::from(Vector3::from(self.approach_point))
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.approach_normal)
    }
}

/// Simulated-annealing parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealParams {
    /// Metropolis iterations per seed (0 degenerates to closing the seed).
    pub iterations: usize,
    pub initial_temperature: f64,
    /// Exponential cooling factor per iteration, in (0,1).
    pub cooling: f64,
    /// Gaussian proposal scale on palm translation (metres).
    pub translation_scale: f64,
    /// Gaussian proposal scale on palm rotation (radians).
    pub rotation_scale: f64,
    /// Gaussian proposal scale on joints (radians).
    pub joint_scale: f64,
    /// Half-angle of the cone about the seed approach direction that the
    /// palm axis must stay inside (radians).
    pub cone_half_angle: f64,
    /// Translation radius of the top-2 distinctness metric (metres).
    pub distinct_translation: f64,
    /// Rotation radius of the top-2 distinctness metric (radians).
    pub distinct_rotation: f64,
    /// Contact epsilon for finger closing (metres).
    pub contact_eps: f64,
    /// Rng stream seed for this run.
    pub rng_seed: u64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            iterations: 45_000,
            initial_temperature: 10.0,
            cooling: 0.9997,
            translation_scale: 0.005,
            rotation_scale: 0.05,
            joint_scale: 0.05,
            cone_half_angle: 30f64.to_radians(),
            distinct_translation: 0.01,
            distinct_rotation: 0.2,
            contact_eps: 1e-3,
            rng_seed: 0,
        }
    }
}

impl AnnealParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("initial_temperature", self.initial_temperature),
            ("translation_scale", self.translation_scale),
            ("rotation_scale", self.rotation_scale),
            ("joint_scale", self.joint_scale),
            ("cone_half_angle", self.cone_half_angle),
            ("distinct_translation", self.distinct_translation),
            ("distinct_rotation", self.distinct_rotation),
            ("contact_eps", self.contact_eps),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid("anneal params", format!("{name} = {v}")));
            }
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::invalid(
                "anneal params",
                format!("cooling = {} outside (0,1)", self.cooling),
            ));
        }
        Ok(())
    }
}

/// One sampled grasp candidate with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraspSample {
    pub pose: HandPose,
    /// Contact energy of the (finger-closed) pose; lower is better.
    pub energy: f64,
    pub seed: GraspSeed,
}

/// The diverse sample set handed to refinement.
pub type SampleSet = Vec<GraspSample>;

/// Generates the seed grammar: `n_approach` uniformly sampled surface points
/// crossed with every roll angle and standoff (`n_approach * 16` seeds).
pub fn generate_seeds(object: &ObjectModel, n_approach: usize, rng_seed: u64) -> Vec<GraspSeed> {
    let points = crate::geometry::sample_surface(object.mesh(), n_approach, rng_seed);
    let mut seeds = Vec::with_capacity(points.len() * 16);
    for p in &points {
        for &roll in &ROLL_ANGLES {
            for &standoff in &STANDOFFS {
                let index = seeds.len();
                seeds.push(GraspSeed {
                    approach_point: [p.position.x, p.position.y, p.position.z],
                    approach_normal: [p.normal.x, p.normal.y, p.normal.z],
                    roll,
                    standoff,
                    index,
                });
            }
        }
    }
    seeds
}

/// Places the hand at a seed: palm origin at
/// `a + (standoff + palm_offset) * n`, approach axis anti-parallel to the
/// surface normal, rolled about the approach direction, joints open.
pub fn seed_to_pose(seed: &GraspSeed, hand: &HandModel) -> HandPose {
    let n = seed.normal();
    let approach_world = -n;
    let axis_local = hand.approach_axis().into_inner();
    let align = UnitQuaternion::rotation_between(&axis_local, &approach_world)
        .unwrap_or_else(|| {
            // Anti-parallel: rotate half a turn about any axis orthogonal to
            // the approach axis.
            let helper = if axis_local.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            let ortho = Unit::new_normalize(axis_local.cross(&helper));
            UnitQuaternion::from_axis_angle(&ortho, std::f64::consts::PI)
        });
    let roll = UnitQuaternion::from_axis_angle(&Unit::new_normalize(approach_world), seed.roll);
    let rotation = roll * align;
    let translation = seed.point().coords + (seed.standoff + hand.palm_offset()) * n;
    hand.open_pose(rotation, translation)
}

/// Contact energy of a pose: for every desired contact site, its distance
/// above the object surface plus a misalignment penalty between the site's
/// inward direction and the object normal. Deep penetration of any site caps
/// the energy at [`ENERGY_CAP`].
pub fn contact_energy(pose: &HandPose, object: &ObjectModel, hand: &HandModel) -> f64 {
    let fk = hand.forward_kinematics(pose);
    let mut energy = 0.0;
    for site in hand.contact_sites() {
        let x = fk.segment_world[site.segment] * site.point;
        let m = fk.segment_world[site.segment].rotation * site.normal;
        let s = object.sample_sdf(&x);
        if s.value < -PENETRATION_CAP_DEPTH {
            return ENERGY_CAP;
        }
        let g = s.gradient;
        let gn = g.norm();
        let alignment = if gn > 1e-12 { g.dot(&-m) / gn } else { 0.0 };
        energy += s.value.max(0.0) + ALIGNMENT_WEIGHT * (1.0 - alignment);
    }
    energy
}

/// Precomputed closing order and subtrees for [`close_fingers`]; build once
/// per hand and reuse across many closings.
#[derive(Debug, Clone)]
pub struct ClosingPlan {
    /// Closing joints, root-to-tip (stable on ties).
    joint_order: Vec<usize>,
    /// Per entry of `joint_order`: the joints at or below it, topological.
    subtree_joints: Vec<Vec<usize>>,
}

/// Coarse closing step (radians); contact is then bisected to ~1/64 of this.
const CLOSING_COARSE_STEP: f64 = 0.08;
const CLOSING_BISECTIONS: usize = 6;

impl ClosingPlan {
    pub fn new(hand: &HandModel) -> ClosingPlan {
        let mut order: Vec<usize> = (0..hand.joints().len())
            .filter(|&ji| hand.joints()[ji].closing != 0.0)
            .collect();
        order.sort_by_key(|&ji| {
            (
                hand.ancestor_joints(hand.joints()[ji].child).len(),
                ji,
            )
        });
        let subtree_joints = order
            .iter()
            .map(|&ji| {
                // Joints whose child segment has `ji` among its ancestors.
                let mut subtree: Vec<usize> = (0..hand.joints().len())
                    .filter(|&jj| {
                        jj == ji
                            || hand
                                .ancestor_joints(hand.joints()[jj].child)
                                .contains(&ji)
                    })
                    .collect();
                subtree.sort_by_key(|&jj| hand.ancestor_joints(hand.joints()[jj].child).len());
                subtree
            })
            .collect();
        ClosingPlan {
            joint_order: order,
            subtree_joints,
        }
    }

    /// Advances each closing DOF (root-to-tip) until a closing probe of a
    /// segment it moves reaches the object surface (`sdf <= contact_eps`) or
    /// the joint limit. A DOF already in contact is left unchanged.
    pub fn close(
        &self,
        hand: &HandModel,
        object: &ObjectModel,
        pose: &HandPose,
        contact_eps: f64,
    ) -> HandPose {
        let mut current = pose.clone();
        for (oi, &ji) in self.joint_order.iter().enumerate() {
            let joint = &hand.joints()[ji];
            let dir = joint.closing;
            let limit = if dir > 0.0 { joint.upper } else { joint.lower };
            let fk = hand.forward_kinematics(&current);
            let base_frame = fk.segment_world[joint.parent] * joint.origin;
            let subtree = &self.subtree_joints[oi];

            let probe_min = |q: f64| -> f64 {
                // World transforms of subtree segments with joint ji at q and
                // deeper joints at their current values.
                let mut world: Vec<(usize, Isometry3<f64>)> = Vec::with_capacity(subtree.len());
                let mut min_sdf = f64::INFINITY;
                for &jj in subtree {
                    let j = &hand.joints()[jj];
                    let value = if jj == ji { q } else { current.joints[j.dof] };
                    let frame = if jj == ji {
                        base_frame
                    } else {
                        let parent_world = world
                            .iter()
                            .find(|(s, _)| *s == j.parent)
                            .map(|(_, w)| *w)
                            .unwrap_or(fk.segment_world[j.parent]);
                        parent_world * j.origin
                    };
                    let spin = UnitQuaternion::from_axis_angle(&j.axis, value);
                    let seg_world = frame * Isometry3::from_parts(Translation3::identity(), spin);
                    world.push((j.child, seg_world));
                    let seg = &hand.segments()[j.child];
                    for &pi in &seg.closing_probes {
                        let x = seg_world * seg.check_points[pi];
                        min_sdf = min_sdf.min(object.sample_sdf(&x).value);
                    }
                }
                min_sdf
            };

            let q0 = current.joints[joint.dof];
            if (limit - q0) * dir <= 0.0 || probe_min(q0) <= contact_eps {
                continue;
            }
            // Coarse march toward the limit, then bisect the first contact.
            let mut free = q0;
            let mut contact_q = None;
            loop {
                let mut next = free + dir * CLOSING_COARSE_STEP;
                if (limit - next) * dir <= 0.0 {
                    next = limit;
                }
                if probe_min(next) <= contact_eps {
                    contact_q = Some(next);
                    break;
                }
                free = next;
                if free == limit {
                    break;
                }
            }
            current.joints[joint.dof] = match contact_q {
                None => limit,
                Some(mut hit) => {
                    for _ in 0..CLOSING_BISECTIONS {
                        let mid = 0.5 * (free + hit);
                        if probe_min(mid) <= contact_eps {
                            hit = mid;
                        } else {
                            free = mid;
                        }
                    }
                    hit
                }
            };
        }
        current
    }
}

/// One-shot convenience wrapper around [`ClosingPlan::close`].
pub fn close_fingers(
    hand: &HandModel,
    object: &ObjectModel,
    pose: &HandPose,
    contact_eps: f64,
) -> HandPose {
    ClosingPlan::new(hand).close(hand, object, pose, contact_eps)
}

/// Whether two poses fall in different basins under the combined
/// translation + rotation metric (normalized sum exceeding one).
pub fn is_distinct(
    a: &HandPose,
    b: &HandPose,
    translation_radius: f64,
    rotation_radius: f64,
) -> bool {
    let dt = (a.translation - b.translation).norm();
    let dr = a.rotation.angle_to(&b.rotation);
    dt / translation_radius + dr / rotation_radius > 1.0
}

/// Keeps the two lowest-energy mutually distinct poses seen so far.
struct EliteArchive {
    entries: Vec<(HandPose, f64)>,
    translation_radius: f64,
    rotation_radius: f64,
}

impl EliteArchive {
    fn new(params: &AnnealParams) -> Self {
        EliteArchive {
            entries: Vec::with_capacity(3),
            translation_radius: params.distinct_translation,
            rotation_radius: params.distinct_rotation,
        }
    }

    fn offer(&mut self, pose: &HandPose, energy: f64) {
        // Same basin as an existing entry: keep the better representative.
        for e in &mut self.entries {
            if !is_distinct(pose, &e.0, self.translation_radius, self.rotation_radius) {
                if energy < e.1 {
                    *e = (pose.clone(), energy);
                    self.entries
                        .sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite energies"));
                }
                return;
            }
        }
        self.entries.push((pose.clone(), energy));
        self.entries
            .sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite energies"));
        self.entries.truncate(2);
    }

    fn into_entries(self) -> Vec<(HandPose, f64)> {
        self.entries
    }
}

/// Simulated annealing from a seed pose: Gaussian proposals on the full pose
/// (palm and joints), fingers closed before every energy evaluation, palm
/// axis constrained to a cone about the seed approach direction. Returns the
/// two lowest-energy distinct closed poses visited (including the closed
/// seed itself).
pub fn anneal(
    seed_pose: &HandPose,
    object: &ObjectModel,
    hand: &HandModel,
    params: &AnnealParams,
) -> Result<Vec<(HandPose, f64)>> {
    params.validate()?;
    let plan = ClosingPlan::new(hand);
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let axis_local = hand.approach_axis().into_inner();
    let cone_axis = seed_pose.rotation * axis_local;
    let cone_cos = params.cone_half_angle.cos();

    let mut archive = EliteArchive::new(params);
    let mut current = plan.close(hand, object, seed_pose, params.contact_eps);
    let mut current_energy = contact_energy(&current, object, hand);
    archive.offer(&current, current_energy);

    let mut temperature = params.initial_temperature;
    for _ in 0..params.iterations {
        // Propose: full-pose Gaussian perturbation.
        let omega = Vector3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ) * params.rotation_scale;
        let dt = Vector3::new(
            normal.sample(&mut rng),
            normal.sample(&mut rng),
            normal.sample(&mut rng),
        ) * params.translation_scale;
        let mut proposal = current.clone();
        proposal.rotation = UnitQuaternion::from_scaled_axis(omega) * proposal.rotation;
        proposal.translation += dt;
        for j in hand.joints() {
            proposal.joints[j.dof] += normal.sample(&mut rng) * params.joint_scale;
        }
        hand.clamp_pose(&mut proposal);
        // Advance the metropolis draw unconditionally so the random stream
        // does not depend on the cone test.
        let metropolis: f64 = rng.random();

        // Cone constraint about the seed approach direction.
        let axis_world = proposal.rotation * axis_local;
        if axis_world.dot(&cone_axis) < cone_cos {
            temperature *= params.cooling;
            continue;
        }

        let closed = plan.close(hand, object, &proposal, params.contact_eps);
        let energy = contact_energy(&closed, object, hand);
        archive.offer(&closed, energy);
        let accept = energy < current_energy
            || metropolis < (-(energy - current_energy) / temperature).exp();
        if accept {
            current = closed;
            current_energy = energy;
        }
        temperature *= params.cooling;
    }
    Ok(archive.into_entries())
}

/// Runs the full sampling stage: seed grammar, then one annealing run per
/// seed on its own rng stream, flattened in seed order (deterministic and
/// independent of thread count).
pub fn sample_grasps(
    hand: &HandModel,
    object: &ObjectModel,
    n_approach: usize,
    params: &AnnealParams,
    global_seed: u64,
) -> Result<SampleSet> {
    if n_approach == 0 {
        return Err(Error::invalid("sampler", "n_approach = 0"));
    }
    params.validate()?;
    let seeds = generate_seeds(object, n_approach, derive_seed(global_seed, 0));
    let per_seed: Vec<Result<Vec<GraspSample>>> = seeds
        .par_iter()
        .map(|seed| {
            let mut run = *params;
            run.rng_seed = derive_seed(global_seed, 1 + seed.index as u64);
            let pose = seed_to_pose(seed, hand);
            let entries = anneal(&pose, object, hand, &run)?;
            Ok(entries
                .into_iter()
                .map(|(pose, energy)| GraspSample {
                    pose,
                    energy,
                    seed: *seed,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(seeds.len() * 2);
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}
