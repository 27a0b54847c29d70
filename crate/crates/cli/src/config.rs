//! Run configuration: a TOML file whose every field can be overridden by a
//! command-line flag (flags win). The fully resolved configuration is echoed
//! into the output directory so a run can be reproduced bit-exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use graspsynth::objective::ObjectiveConfig;
use graspsynth::optimizer::LmParams;
use graspsynth::sampler::AnnealParams;

use crate::Failure;

/// Everything a run needs: paths, hyperparameters, and budgets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Object mesh path (`.obj` or `.ply`).
    pub object: Option<PathBuf>,
    /// Contact source: `.contactmap`, `.ply` (scalar field), or `.toml`
    /// (painted regions).
    pub contacts: Option<PathBuf>,
    /// Hand model: a builtin name or a config file path.
    pub hand: String,
    /// Output directory.
    pub output: Option<PathBuf>,
    /// Contact threshold tau applied when constructing maps.
    pub contact_threshold: f64,
    /// Vertex property holding the scalar field in a contact PLY.
    pub scalar_property: String,
    /// Number of labelled surface samples on the object.
    pub surface_samples: usize,
    /// Distance-grid spacing (metres).
    pub grid_spacing: f64,
    /// Approach points in the seed grammar (16 candidates each).
    pub n_approach: usize,
    /// How many top grasps to bake as OBJ scenes (0 = none).
    pub top_k: usize,
    /// Global rng seed.
    pub seed: u64,
    /// Worker threads (0 = available parallelism).
    pub threads: usize,
    pub objective: ObjectiveConfig,
    pub anneal: AnnealParams,
    pub lm: LmParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            object: None,
            contacts: None,
            hand: "barrett-like".to_string(),
            output: None,
            contact_threshold: 0.3,
            scalar_property: "contact".to_string(),
            surface_samples: 5000,
            grid_spacing: 0.004,
            n_approach: 8,
            top_k: 0,
            seed: 0,
            threads: 0,
            objective: ObjectiveConfig::default(),
            anneal: AnnealParams::default(),
            lm: LmParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::input(format!("config {}: {e}", path.display())))
    }

    /// Serializes the resolved configuration for provenance echo.
    pub fn to_toml(&self) -> Result<String, Failure> {
        toml::to_string_pretty(self)
            .map_err(|e| Failure::input(format!("config serialization: {e}")))
    }
}

/// Flag-level overrides shared by the subcommands. Any flag set here wins
/// over the corresponding config-file field.
#[derive(Debug, Default, clap::Args)]
pub struct Overrides {
    /// Object mesh path (.obj or .ply)
    #[arg(long)]
    pub object: Option<PathBuf>,
    /// Contact source (.contactmap, .ply, or regions .toml)
    #[arg(long)]
    pub contacts: Option<PathBuf>,
    /// Hand model: builtin name (barrett-like, allegro-like, human-like) or config path
    #[arg(long)]
    pub hand: Option<String>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Contact threshold tau for map construction
    #[arg(long)]
    pub contact_threshold: Option<f64>,
    /// Vertex property carrying the scalar field in a contact PLY
    #[arg(long)]
    pub scalar_property: Option<String>,
    /// Labelled surface samples on the object
    #[arg(long)]
    pub surface_samples: Option<usize>,
    /// Distance-grid spacing in metres
    #[arg(long)]
    pub grid_spacing: Option<f64>,
    /// Approach points in the seed grammar
    #[arg(long)]
    pub n_approach: Option<usize>,
    /// Top grasps exported as OBJ scenes
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Global rng seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = available parallelism)
    #[arg(long)]
    pub threads: Option<usize>,

    /// Weight of attractive contact residuals
    #[arg(long)]
    pub attractive_weight: Option<f64>,
    /// Weight of repulsive contact residuals
    #[arg(long)]
    pub repulsive_weight: Option<f64>,
    /// Weight of the thumb-contact residual
    #[arg(long)]
    pub thumb_weight: Option<f64>,
    /// Weight of intersection penalties
    #[arg(long)]
    pub intersection_weight: Option<f64>,
    /// Normal-alignment gate for repulsion, in (0,1)
    #[arg(long)]
    pub normal_gate: Option<f64>,
    /// Repulsion margin in metres
    #[arg(long)]
    pub repulsion_margin: Option<f64>,
    /// Intersection check points per hand segment
    #[arg(long)]
    pub check_points_per_segment: Option<usize>,

    /// Annealing iterations per seed
    #[arg(long)]
    pub sa_iterations: Option<usize>,
    /// Annealing initial temperature
    #[arg(long)]
    pub sa_initial_temperature: Option<f64>,
    /// Annealing cooling factor per iteration, in (0,1)
    #[arg(long)]
    pub sa_cooling: Option<f64>,
    /// Annealing translation proposal scale (metres)
    #[arg(long)]
    pub sa_translation_scale: Option<f64>,
    /// Annealing rotation proposal scale (radians)
    #[arg(long)]
    pub sa_rotation_scale: Option<f64>,
    /// Annealing joint proposal scale (radians)
    #[arg(long)]
    pub sa_joint_scale: Option<f64>,
    /// Approach-cone half angle (radians)
    #[arg(long)]
    pub sa_cone_half_angle: Option<f64>,
    /// Distinctness radius, translation (metres)
    #[arg(long)]
    pub sa_distinct_translation: Option<f64>,
    /// Distinctness radius, rotation (radians)
    #[arg(long)]
    pub sa_distinct_rotation: Option<f64>,
    /// Finger-closing contact epsilon (metres)
    #[arg(long)]
    pub sa_contact_eps: Option<f64>,

    /// Refinement iteration cap
    #[arg(long)]
    pub lm_max_iters: Option<usize>,
    /// Initial damping factor
    #[arg(long)]
    pub lm_initial_damping: Option<f64>,
    /// Damping multiplier after a rejected step
    #[arg(long)]
    pub lm_damping_increase: Option<f64>,
    /// Damping multiplier after an accepted step
    #[arg(long)]
    pub lm_damping_decrease: Option<f64>,
    /// Step-size stop tolerance
    #[arg(long)]
    pub lm_step_tol: Option<f64>,
    /// Relative objective-decrease stop tolerance
    #[arg(long)]
    pub lm_objective_tol: Option<f64>,
    /// Gradient-cosine stop tolerance
    #[arg(long)]
    pub lm_gradient_tol: Option<f64>,
    /// Damping ceiling
    #[arg(long)]
    pub lm_max_damping: Option<f64>,
}

macro_rules! set_if {
    ($cfg:expr, $ovr:expr; $($flag:ident => $($path:ident).+),+ $(,)?) => {
        $( if let Some(v) = $ovr.$flag.clone() { $cfg.$($path).+ = v; } )+
    };
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.object {
            cfg.object = Some(p.clone());
        }
        if let Some(p) = &self.contacts {
            cfg.contacts = Some(p.clone());
        }
        if let Some(p) = &self.output {
            cfg.output = Some(p.clone());
        }
        if let Some(h) = &self.hand {
            cfg.hand = h.clone();
        }
        set_if!(cfg, self;
            contact_threshold => contact_threshold,
            scalar_property => scalar_property,
            surface_samples => surface_samples,
            grid_spacing => grid_spacing,
            n_approach => n_approach,
            top_k => top_k,
            seed => seed,
            threads => threads,
            attractive_weight => objective.attractive_weight,
            repulsive_weight => objective.repulsive_weight,
            thumb_weight => objective.thumb_weight,
            intersection_weight => objective.intersection_weight,
            normal_gate => objective.normal_gate,
            repulsion_margin => objective.repulsion_margin,
            check_points_per_segment => objective.check_points_per_segment,
            sa_iterations => anneal.iterations,
            sa_initial_temperature => anneal.initial_temperature,
            sa_cooling => anneal.cooling,
            sa_translation_scale => anneal.translation_scale,
            sa_rotation_scale => anneal.rotation_scale,
            sa_joint_scale => anneal.joint_scale,
            sa_cone_half_angle => anneal.cone_half_angle,
            sa_distinct_translation => anneal.distinct_translation,
            sa_distinct_rotation => anneal.distinct_rotation,
            sa_contact_eps => anneal.contact_eps,
            lm_max_iters => lm.max_iters,
            lm_initial_damping => lm.initial_damping,
            lm_damping_increase => lm.damping_increase,
            lm_damping_decrease => lm.damping_decrease,
            lm_step_tol => lm.step_tol,
            lm_objective_tol => lm.objective_tol,
            lm_gradient_tol => lm.gradient_tol,
            lm_max_damping => lm.max_damping,
        );
    }
}

/// Config file (when given) with flag overrides applied on top.
pub fn resolve(config: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    Ok(cfg)
}
