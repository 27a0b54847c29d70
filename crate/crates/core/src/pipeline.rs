//! End-to-end synthesis and evaluation: sample candidates, refine every one
//! against the contact map, rank by converged residual, and run the
//! scenario-suite evaluation harness comparing residual ranking against
//! contact-energy ranking.

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactMap, ContactPoint, LabelledRegion, ScalarContactField};
use crate::error::{Error, Result};
use crate::geometry::{load_ply_with_scalar, shapes, GridBuildParams};
use crate::hand::{HandModel, HandPose};
use crate::object::ObjectModel;
use crate::objective::{GraspObjective, ObjectiveConfig, ResidualReport, RowKind};
use crate::optimizer::{refine_grasp, ConvergenceReason, LmParams};
use crate::sampler::{
    contact_energy, is_distinct, sample_grasps, AnnealParams, GraspSample, GraspSeed,
};

/// Fixed stream for the surface samples that carry contact labels, so an
/// object's contact map does not change with the run seed.
pub const SURFACE_SAMPLE_SEED: u64 = 7;

/// Ranking key for a grasp set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMetric {
    /// Converged objective (total L), ascending.
    Residual,
    /// Pre-refinement contact energy, ascending.
    ContactEnergy,
}

impl std::str::FromStr for RankMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(RankMetric::Residual),
            "contact-energy" => Ok(RankMetric::ContactEnergy),
            other => Err(Error::invalid(
                "rank metric",
                format!("`{other}` (expected `residual` or `contact-energy`)"),
            )),
        }
    }
}

/// Everything `synthesize` needs beyond the object/map/hand triple.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Approach points of the seed grammar (16 seeds each).
    pub n_approach: usize,
    pub anneal: AnnealParams,
    pub lm: LmParams,
    pub objective: ObjectiveConfig,
    /// Global rng seed; every per-seed stream derives from it.
    pub rng_seed: u64,
    /// Extra poses injected as candidates (used by evaluation to plant a
    /// ground-truth grasp; leave empty for plain synthesis).
    pub inject: Vec<HandPose>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_approach: 8,
            anneal: AnnealParams::default(),
            lm: LmParams::default(),
            objective: ObjectiveConfig::default(),
            rng_seed: 0,
            inject: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_approach == 0 {
            return Err(Error::invalid("pipeline config", "n_approach = 0"));
        }
        self.anneal.validate()?;
        self.lm.validate()?;
        self.objective.validate()
    }
}

/// One ranked candidate with full provenance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankedEntry {
    /// 1-based rank under the set's current metric.
    pub rank: usize,
    pub pose: HandPose,
    pub report: ResidualReport,
    pub seed: GraspSeed,
    /// Contact energy of the candidate before refinement.
    pub pre_refine_energy: f64,
    /// Stable candidate id (position in the pre-ranking candidate list);
    /// survives re-ranking.
    pub candidate: usize,
    /// The refiner stalled on this entry; its best-so-far state is kept.
    pub refine_failed: bool,
    /// Entered through `PipelineConfig::inject` rather than sampling.
    pub injected: bool,
}

/// Refined candidates ranked 1..M (dense) under `metric`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankedGraspSet {
    pub metric: RankMetric,
    pub entries: Vec<RankedEntry>,
    /// Snapshot of the configuration that produced the set.
    pub config: PipelineConfig,
}

fn assign_ranks(entries: &mut [RankedEntry]) {
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

/// Samples candidates, refines each against the contact map, and ranks the
/// refined poses by total objective (ties: lower pre-refinement energy, then
/// lower candidate id). Candidates whose refinement stalls are kept with
/// their best-so-far state and flagged.
pub fn synthesize(
    object: &ObjectModel,
    contacts: &ContactMap,
    hand: &HandModel,
    config: &PipelineConfig,
) -> Result<RankedGraspSet> {
    config.validate()?;
    let mut candidates: Vec<GraspSample> =
        sample_grasps(hand, object, config.n_approach, &config.anneal, config.rng_seed)?;
    let injected_from = candidates.len();
    for (k, pose) in config.inject.iter().enumerate() {
        // Synthetic provenance: recover the approach the pose implies.
        let axis_world = pose.rotation * hand.approach_axis().into_inner();
        let normal = -axis_world;
        let point = pose.translation - hand.palm_offset() * normal;
        candidates.push(GraspSample {
            pose: pose.clone(),
            energy: contact_energy(pose, object, hand),
            seed: GraspSeed {
                approach_point: [point.x, point.y, point.z],
                approach_normal: [normal.x, normal.y, normal.z],
                roll: 0.0,
                standoff: 0.0,
                index: config.n_approach * 16 + k,
            },
        });
    }
    if candidates.is_empty() {
        return Err(Error::invalid("pipeline", "sampling produced no candidates"));
    }

    let objective = GraspObjective::new(hand, object, contacts, config.objective)?;
    let mut entries: Vec<RankedEntry> = candidates
        .par_iter()
        .enumerate()
        .map(|(ci, sample)| {
            let result = refine_grasp(&objective, &sample.pose, &config.lm)?;
            let (_, report) = objective.evaluate(&result.state);
            Ok(RankedEntry {
                rank: 0,
                pose: result.state,
                report,
                seed: sample.seed,
                pre_refine_energy: sample.energy,
                candidate: ci,
                refine_failed: result.reason == ConvergenceReason::Stalled,
                injected: ci >= injected_from,
            })
        })
        .collect::<Result<_>>()?;

    entries.sort_by(|a, b| {
        a.report
            .total
            .total_cmp(&b.report.total)
            .then(a.pre_refine_energy.total_cmp(&b.pre_refine_energy))
            .then(a.candidate.cmp(&b.candidate))
    });
    assign_ranks(&mut entries);
    Ok(RankedGraspSet {
        metric: RankMetric::Residual,
        entries,
        config: config.clone(),
    })
}

/// Stable re-sort of the same entries by the chosen key; ranks reassigned
/// 1..M dense.
pub fn rank_by(metric: RankMetric, set: &RankedGraspSet) -> RankedGraspSet {
    let mut entries = set.entries.clone();
    match metric {
        RankMetric::Residual => entries.sort_by(|a, b| {
            a.report
                .total
                .total_cmp(&b.report.total)
                .then(a.pre_refine_energy.total_cmp(&b.pre_refine_energy))
                .then(a.candidate.cmp(&b.candidate))
        }),
        RankMetric::ContactEnergy => entries.sort_by(|a, b| {
            a.pre_refine_energy
                .total_cmp(&b.pre_refine_energy)
                .then(a.candidate.cmp(&b.candidate))
        }),
    }
    assign_ranks(&mut entries);
    RankedGraspSet {
        metric,
        entries,
        config: set.config.clone(),
    }
}

/// How the evaluation decides whether a candidate is "the" target grasp.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Within a combined pose-distance ball around the planted pose.
    PoseBall {
        #[serde(default = "default_pose_ball_translation")]
        translation_radius: f64,
        #[serde(default = "default_pose_ball_rotation")]
        rotation_radius: f64,
    },
    /// Attractive-point coverage of at least `coverage` within `distance`,
    /// with zero gated repulsive violations.
    ContactAgreement {
        #[serde(default = "default_agreement_coverage")]
        coverage: f64,
        #[serde(default = "default_agreement_distance")]
        distance: f64,
    },
    /// The entry that entered through injection (requires `inject_planted`).
    /// Measures where the ground-truth grasp itself ranks after refinement,
    /// independent of how far refinement legitimately moves it.
    Injected,
}

fn default_pose_ball_translation() -> f64 {
    0.02
}
fn default_pose_ball_rotation() -> f64 {
    0.3
}
fn default_agreement_coverage() -> f64 {
    0.9
}
fn default_agreement_distance() -> f64 {
    0.003
}

/// One evaluation case: an object, its contact map, and the target test.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub object: ObjectModel,
    pub contacts: ContactMap,
    pub target: TargetSpec,
    pub planted: Option<HandPose>,
    /// Add the planted pose to the candidate set (ground-truth rank probe).
    pub inject_planted: bool,
}

/// Per-scenario evaluation columns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioOutcome {
    pub name: String,
    /// Candidate count M of the ranked set.
    pub entry_count: usize,
    /// Rank of the first target-satisfying entry under residual ranking
    /// (M+1 when the predicate is never satisfied).
    pub residual_rank: usize,
    /// Same, under contact-energy ranking.
    pub energy_rank: usize,
    /// False when no entry satisfied the target predicate.
    pub target_met: bool,
    /// Grasp term (attractive + repulsive) of the top-1 under each ranking.
    pub top1_grasp_residual: f64,
    pub top1_grasp_energy: f64,
}

/// Evaluation summary across scenarios.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub scenarios: Vec<ScenarioOutcome>,
    pub median_residual_rank: f64,
    pub median_energy_rank: f64,
    pub median_top1_grasp_residual: f64,
    pub median_top1_grasp_energy: f64,
}

/// Median of a non-empty slice (mean of the central pair for even lengths).
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Whether one entry satisfies the scenario's target predicate.
fn entry_matches_target(
    entry: &RankedEntry,
    scenario: &Scenario,
    objective: &GraspObjective<'_>,
) -> bool {
    match &scenario.target {
        TargetSpec::PoseBall {
            translation_radius,
            rotation_radius,
        } => {
            let planted = scenario
                .planted
                .as_ref()
                .expect("pose-ball target requires a planted pose");
            !is_distinct(&entry.pose, planted, *translation_radius, *rotation_radius)
        }
        TargetSpec::ContactAgreement { coverage, distance } => {
            let assembly = objective.assemble(&entry.pose);
            let sqrt_attract = objective.config().attractive_weight.sqrt();
            let mut attractive = 0usize;
            let mut covered = 0usize;
            let mut violations = 0usize;
            for row in &assembly.rows {
                match row.kind {
                    RowKind::Attractive { .. } => {
                        attractive += 1;
                        // Unweight the residual back to a signed distance.
                        if row.residual / sqrt_attract <= *distance {
                            covered += 1;
                        }
                    }
                    RowKind::Repulsive { .. } => {
                        if row.residual > 0.0 {
                            violations += 1;
                        }
                    }
                    _ => {}
                }
            }
            violations == 0
                && attractive > 0
                && (covered as f64) >= *coverage * (attractive as f64)
        }
        TargetSpec::Injected => entry.injected,
    }
}

/// Runs synthesis on every scenario and reports the target grasp's rank
/// under both metrics, the top-1 grasp term under both, and medians.
pub fn evaluate(
    scenarios: &[Scenario],
    hand: &HandModel,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    if scenarios.is_empty() {
        return Err(Error::invalid("evaluation", "empty scenario list"));
    }
    let outcomes: Vec<ScenarioOutcome> = scenarios
        .par_iter()
        .map(|scenario| -> Result<ScenarioOutcome> {
            let with_context = |e: Error| {
                Error::invalid(
                    "scenario",
                    format!("`{}` failed: {e}", scenario.name),
                )
            };
            if matches!(scenario.target, TargetSpec::Injected) && !scenario.inject_planted {
                return Err(Error::invalid(
                    "scenario",
                    format!("`{}` targets the injected entry without inject_planted", scenario.name),
                ));
            }
            let mut cfg = config.clone();
            if scenario.inject_planted {
                let planted = scenario.planted.as_ref().ok_or_else(|| {
                    Error::invalid(
                        "scenario",
                        format!("`{}` injects a planted pose but provides none", scenario.name),
                    )
                })?;
                cfg.inject.push(planted.clone());
            }
            let residual_set = synthesize(&scenario.object, &scenario.contacts, hand, &cfg)
                .map_err(with_context)?;
            let energy_set = rank_by(RankMetric::ContactEnergy, &residual_set);
            let m = residual_set.entries.len();

            // Target satisfaction per candidate id, shared by both rankings.
            let objective =
                GraspObjective::new(hand, &scenario.object, &scenario.contacts, cfg.objective)
                    .map_err(with_context)?;
            let first_match = |set: &RankedGraspSet| -> Option<usize> {
                set.entries
                    .iter()
                    .find(|e| entry_matches_target(e, scenario, &objective))
                    .map(|e| e.rank)
            };
            let residual_rank = first_match(&residual_set);
            let energy_rank = first_match(&energy_set);
            Ok(ScenarioOutcome {
                name: scenario.name.clone(),
                entry_count: m,
                residual_rank: residual_rank.unwrap_or(m + 1),
                energy_rank: energy_rank.unwrap_or(m + 1),
                target_met: residual_rank.is_some(),
                top1_grasp_residual: residual_set.entries[0].report.grasp_sum(),
                top1_grasp_energy: energy_set.entries[0].report.grasp_sum(),
            })
        })
        .collect::<Result<_>>()?;

    let col = |f: fn(&ScenarioOutcome) -> f64| -> Vec<f64> { outcomes.iter().map(f).collect() };
    Ok(EvalReport {
        median_residual_rank: median(&col(|o| o.residual_rank as f64)),
        median_energy_rank: median(&col(|o| o.energy_rank as f64)),
        median_top1_grasp_residual: median(&col(|o| o.top1_grasp_residual)),
        median_top1_grasp_energy: median(&col(|o| o.top1_grasp_energy)),
        scenarios: outcomes,
    })
}

/// Labels the object's surface samples by contact with a posed hand:
/// attractive where some hand segment is within `touch_distance`, repulsive
/// elsewhere. This is how a planted grasp turns into its own contact map.
pub fn map_from_pose(
    object: &ObjectModel,
    hand: &HandModel,
    pose: &HandPose,
    touch_distance: f64,
    threshold: f64,
) -> Result<ContactMap> {
    let fk = hand.forward_kinematics(pose);
    let bounds = hand.segment_bounds(&fk);
    let points = object.surface_samples().iter().map(|s| {
        let (_, sample) = hand.closest_segment_bounded(&fk, &bounds, &s.position);
        ContactPoint {
            position: s.position,
            normal: s.normal,
            label: if sample.value <= touch_distance { 1 } else { -1 },
        }
    });
    ContactMap::from_labelled_points(points, threshold, "planted-pose")
}

// ---------------------------------------------------------------------------
// Scenario manifest (TOML).

/// Object source in a scenario manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectSpec {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
    /// Lathed mug-like body (fixed profile).
    Mug,
    /// Capped flashlight-like body (fixed profile).
    Flashlight,
    /// Mesh file (OBJ or PLY), relative to the manifest.
    Mesh { path: String },
}

impl ObjectSpec {
    pub fn build_mesh(&self, base_dir: Option<&Path>) -> Result<crate::geometry::Mesh> {
        Ok(match self {
            ObjectSpec::Sphere { radius } => shapes::icosphere(*radius, 3),
            ObjectSpec::Box { half_extents } => {
                shapes::box_mesh(Vector3::from(*half_extents))
            }
            ObjectSpec::Cylinder { radius, height } => {
                shapes::cylinder_mesh(*radius, *height, 64)
            }
            ObjectSpec::Mug => shapes::lathe_mesh(&shapes::mug_profile(), 64)?,
            ObjectSpec::Flashlight => shapes::lathe_mesh(&shapes::flashlight_profile(), 64)?,
            ObjectSpec::Mesh { path } => {
                let resolved = match base_dir {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                crate::geometry::load_mesh(&resolved)?
            }
        })
    }
}

/// Contact-map source in a scenario manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContactSpec {
    /// Paint labelled regions over the surface samples (default repulsive).
    Regions { regions: Vec<LabelledRegion> },
    /// Per-vertex scalar field from a PLY, thresholded.
    PlyScalar {
        path: String,
        #[serde(default)]
        property: Option<String>,
    },
    /// Derive the map from the scenario's planted pose.
    FromPlanted {
        #[serde(default = "default_agreement_distance")]
        touch_distance: f64,
    },
    /// Load a saved `.contactmap` file.
    File { path: String },
}

/// One scenario as written in a manifest file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub object: ObjectSpec,
    pub contacts: ContactSpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub planted: Option<HandPose>,
    #[serde(default)]
    pub inject_planted: bool,
    /// Grid spacing override (metres).
    #[serde(default)]
    pub spacing: Option<f64>,
}

/// A manifest: a list of scenarios.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioManifest {
    pub scenario: Vec<ScenarioSpec>,
}

impl ScenarioManifest {
    pub fn parse(text: &str) -> Result<ScenarioManifest> {
        toml::from_str(text)
            .map_err(|e| Error::invalid("scenario manifest", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ScenarioManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid("scenario manifest", format!("{}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }
}

/// Shared knobs for turning manifest specs into runnable scenarios.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioDefaults {
    /// SDF grid spacing (metres).
    pub grid_spacing: f64,
    /// Number of labelled surface samples per object.
    pub surface_samples: usize,
    /// Contact threshold tau recorded in constructed maps.
    pub contact_threshold: f64,
}

impl Default for ScenarioDefaults {
    fn default() -> Self {
        ScenarioDefaults {
            grid_spacing: 0.004,
            surface_samples: 5000,
            contact_threshold: 0.3,
        }
    }
}

/// Builds runnable scenarios from a parsed manifest. `base_dir` resolves
/// relative mesh/map paths (typically the manifest's directory).
pub fn build_scenarios(
    manifest: &ScenarioManifest,
    base_dir: Option<&Path>,
    hand: &HandModel,
    defaults: &ScenarioDefaults,
) -> Result<Vec<Scenario>> {
    if manifest.scenario.is_empty() {
        return Err(Error::invalid("scenario manifest", "no scenarios"));
    }
    manifest
        .scenario
        .iter()
        .map(|spec| -> Result<Scenario> {
            let with_context = |e: Error| {
                Error::invalid("scenario", format!("`{}` failed to build: {e}", spec.name))
            };
            let mesh = spec.object.build_mesh(base_dir).map_err(with_context)?;
            let spacing = spec.spacing.unwrap_or(defaults.grid_spacing);
            let object = ObjectModel::new(
                mesh,
                &GridBuildParams::with_spacing(spacing),
                defaults.surface_samples,
                SURFACE_SAMPLE_SEED,
            )
            .map_err(with_context)?;
            let contacts = match &spec.contacts {
                ContactSpec::Regions { regions } => ContactMap::from_regions(
                    object.surface_samples(),
                    regions,
                    defaults.contact_threshold,
                ),
                ContactSpec::PlyScalar { path, property } => {
                    let resolved = match base_dir {
                        Some(dir) => dir.join(path),
                        None => Path::new(path).to_path_buf(),
                    };
                    load_ply_with_scalar(&resolved, Some(property.as_deref().unwrap_or("contact")))
                        .and_then(|(_, scalars)| {
                            let values = scalars.ok_or_else(|| {
                                Error::invalid("scenario", "PLY carries no scalar channel")
                            })?;
                            // Values must align with the object's own mesh.
                            let field = ScalarContactField::new(object.mesh(), values)?;
                            ContactMap::from_scalar_field(
                                object.mesh(),
                                &field,
                                object.surface_samples(),
                                defaults.contact_threshold,
                            )
                        })
                }
                ContactSpec::FromPlanted { touch_distance } => {
                    let planted = spec.planted.as_ref().ok_or_else(|| {
                        Error::invalid(
                            "scenario",
                            format!("`{}` uses from-planted contacts but has no planted pose", spec.name),
                        )
                    })?;
                    map_from_pose(
                        &object,
                        hand,
                        planted,
                        *touch_distance,
                        defaults.contact_threshold,
                    )
                }
                ContactSpec::File { path } => {
                    let resolved = match base_dir {
                        Some(dir) => dir.join(path),
                        None => Path::new(path).to_path_buf(),
                    };
                    ContactMap::load(&resolved)
                }
            }
            .map_err(with_context)?;
            if matches!(spec.target, TargetSpec::PoseBall { .. }) && spec.planted.is_none() {
                return Err(Error::invalid(
                    "scenario",
                    format!("`{}` uses a pose-ball target but has no planted pose", spec.name),
                ));
            }
            if matches!(spec.target, TargetSpec::Injected) && !spec.inject_planted {
                return Err(Error::invalid(
                    "scenario",
                    format!("`{}` targets the injected entry without inject_planted", spec.name),
                ));
            }
            Ok(Scenario {
                name: spec.name.clone(),
                object,
                contacts,
                target: spec.target.clone(),
                planted: spec.planted.clone(),
                inject_planted: spec.inject_planted,
            })
        })
        .collect()
}
