//! Subcommand implementations. Each returns `Failure` carrying the exit
//! code class: input problems (2), synthesis problems (3), evaluation
//! problems (4).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use graspsynth::contact::{ContactMap, LabelledRegion, ScalarContactField};
use graspsynth::export::export_grasp_obj;
use graspsynth::geometry::{load_mesh, load_ply_with_scalar, sample_surface, Mesh, SurfacePoint};
use graspsynth::hand::HandModel;
use graspsynth::object::ObjectModel;
use graspsynth::pipeline::{
    build_scenarios, evaluate, synthesize, PipelineConfig, RankedGraspSet, ScenarioDefaults,
    ScenarioManifest, SURFACE_SAMPLE_SEED,
};

use crate::cache;
use crate::config::RunConfig;
use crate::Failure;

/// Painted-regions file: a list of labelled regions applied in order.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionsFile {
    region: Vec<LabelledRegion>,
}

fn load_hand(cfg: &RunConfig) -> Result<HandModel, Failure> {
    let spec = cfg.hand.as_str();
    let result = if Path::new(spec).is_file() {
        HandModel::load(Path::new(spec), cfg.objective.check_points_per_segment)
    } else {
        HandModel::builtin(spec, cfg.objective.check_points_per_segment)
    };
    result.map_err(|e| Failure::input(format!("hand `{spec}`: {e}")))
}

fn object_path(cfg: &RunConfig) -> Result<&PathBuf, Failure> {
    cfg.object
        .as_ref()
        .ok_or_else(|| Failure::input("no object mesh given (set --object or the config)"))
}

fn output_path(cfg: &RunConfig) -> Result<&PathBuf, Failure> {
    cfg.output
        .as_ref()
        .ok_or_else(|| Failure::input("no output path given (set --output or the config)"))
}

/// Builds the contact map from the configured source against the object's
/// labelled surface samples.
fn load_contacts(
    cfg: &RunConfig,
    mesh: &Mesh,
    samples: &[SurfacePoint],
) -> Result<ContactMap, Failure> {
    let path = cfg
        .contacts
        .as_ref()
        .ok_or_else(|| Failure::input("no contact source given (set --contacts or the config)"))?;
    let input = |e: graspsynth::Error| Failure::input(format!("contacts {}: {e}", path.display()));
    let input_io =
        |e: std::io::Error| Failure::input(format!("contacts {}: {e}", path.display()));
    match path.extension().and_then(|e| e.to_str()) {
        Some("contactmap") => ContactMap::load(path).map_err(input),
        Some("ply") => {
            let (_, scalars) =
                load_ply_with_scalar(path, Some(&cfg.scalar_property)).map_err(input)?;
            let values = scalars.ok_or_else(|| {
                Failure::input(format!(
                    "contacts {}: no `{}` vertex property",
                    path.display(),
                    cfg.scalar_property
                ))
            })?;
            let field = ScalarContactField::new(mesh, values).map_err(input)?;
            ContactMap::from_scalar_field(mesh, &field, samples, cfg.contact_threshold)
                .map_err(input)
        }
        Some("toml") => {
            let text = std::fs::read_to_string(path).map_err(input_io)?;
            let file: RegionsFile = toml::from_str(&text)
                .map_err(|e| Failure::input(format!("contacts {}: {e}", path.display())))?;
            ContactMap::from_regions(samples, &file.region, cfg.contact_threshold).map_err(input)
        }
        _ => Err(Failure::input(format!(
            "contacts {}: unsupported extension (expected .contactmap, .ply, or .toml)",
            path.display()
        ))),
    }
}

fn pipeline_config(cfg: &RunConfig) -> Result<PipelineConfig, Failure> {
    let pipe = PipelineConfig {
        n_approach: cfg.n_approach,
        anneal: cfg.anneal,
        lm: cfg.lm,
        objective: cfg.objective,
        rng_seed: cfg.seed,
        inject: Vec::new(),
    };
    pipe.validate()
        .map_err(|e| Failure::input(format!("configuration: {e}")))?;
    Ok(pipe)
}

/// `contactmap`: label surface samples from a scalar PLY or a regions file
/// and write the result as a `.contactmap`.
pub fn cmd_contactmap(cfg: &RunConfig) -> Result<(), Failure> {
    let out = output_path(cfg)?.clone();
    let obj_path = object_path(cfg)?;
    let mesh = load_mesh(obj_path)
        .map_err(|e| Failure::input(format!("object {}: {e}", obj_path.display())))?;
    let samples = sample_surface(&mesh, cfg.surface_samples, SURFACE_SAMPLE_SEED);
    let map = load_contacts(cfg, &mesh, &samples)?;
    map.save(&out)
        .map_err(|e| Failure::input(format!("output {}: {e}", out.display())))?;
    println!(
        "contact map: {} attractive, {} repulsive of {} (tau {})",
        map.attractive_count(),
        map.repulsive_count(),
        map.len(),
        map.threshold()
    );
    println!("wrote {}", out.display());
    Ok(())
}

/// `synthesize`: full pipeline run; writes `grasps.json`, the resolved
/// `config.toml`, and up to `top_k` baked OBJ scenes into the output
/// directory. On failure, everything written this run is removed.
pub fn cmd_synthesize(cfg: &RunConfig) -> Result<(), Failure> {
    let out_dir = output_path(cfg)?.clone();
    let hand = load_hand(cfg)?;
    let obj_path = object_path(cfg)?;
    let mesh = load_mesh(obj_path)
        .map_err(|e| Failure::input(format!("object {}: {e}", obj_path.display())))?;
    let (grid, cached) = cache::grid_for_mesh(obj_path, &mesh, cfg.grid_spacing)
        .map_err(|e| Failure::input(format!("distance grid: {e}")))?;
    if cached {
        eprintln!("distance grid: cache hit");
    }
    let object = ObjectModel::with_grid(mesh, grid, cfg.surface_samples, SURFACE_SAMPLE_SEED);
    let contacts = load_contacts(cfg, object.mesh(), object.surface_samples())?;
    let pipe = pipeline_config(cfg)?;

    let set = synthesize(&object, &contacts, &hand, &pipe)
        .map_err(|e| Failure::synthesis(e.to_string()))?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Failure::input(format!("output {}: {e}", out_dir.display())))?;
    let mut written: Vec<PathBuf> = Vec::new();
    if let Err(failure) = write_run_outputs(cfg, &set, &hand, &object, &out_dir, &mut written) {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(failure);
    }

    println!(
        "synthesized {} grasps; best objective {:.6}",
        set.entries.len(),
        set.entries[0].report.total
    );
    if cfg.top_k > 0 {
        println!(
            "exported {} scene(s)",
            cfg.top_k.min(set.entries.len())
        );
    }
    println!("wrote {}", out_dir.join("grasps.json").display());
    Ok(())
}

fn write_run_outputs(
    cfg: &RunConfig,
    set: &RankedGraspSet,
    hand: &HandModel,
    object: &ObjectModel,
    out_dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<(), Failure> {
    let synth_io = |p: &Path| {
        let shown = p.display().to_string();
        move |e: std::io::Error| Failure::synthesis(format!("writing {shown}: {e}"))
    };

    let grasps = out_dir.join("grasps.json");
    let mut json = serde_json::to_string_pretty(set)
        .map_err(|e| Failure::synthesis(format!("grasp serialization: {e}")))?;
    json.push('\n');
    std::fs::write(&grasps, json).map_err(synth_io(&grasps))?;
    written.push(grasps);

    let echo = out_dir.join("config.toml");
    std::fs::write(&echo, cfg.to_toml()?).map_err(synth_io(&echo))?;
    written.push(echo);

    for entry in set.entries.iter().take(cfg.top_k) {
        let scene = out_dir.join(format!("grasp_{:03}.obj", entry.rank));
        export_grasp_obj(&scene, object.mesh(), hand, &entry.pose)
            .map_err(|e| Failure::synthesis(format!("writing {}: {e}", scene.display())))?;
        written.push(scene);
    }
    Ok(())
}

/// `eval`: run the scenario manifest and report rank medians under both
/// metrics. Any scenario-level error exits with code 4 and names the
/// scenario.
pub fn cmd_eval(cfg: &RunConfig, manifest_path: &Path) -> Result<(), Failure> {
    let hand = load_hand(cfg)?;
    let manifest = ScenarioManifest::load(manifest_path)
        .map_err(|e| Failure::input(format!("manifest: {e}")))?;
    let defaults = ScenarioDefaults {
        grid_spacing: cfg.grid_spacing,
        surface_samples: cfg.surface_samples,
        contact_threshold: cfg.contact_threshold,
    };
    let scenarios = build_scenarios(&manifest, manifest_path.parent(), &hand, &defaults)
        .map_err(|e| Failure::eval(e.to_string()))?;
    let pipe = pipeline_config(cfg)?;
    let report = evaluate(&scenarios, &hand, &pipe).map_err(|e| Failure::eval(e.to_string()))?;

    for o in &report.scenarios {
        println!(
            "scenario {}: entries {}, residual-rank {}, energy-rank {}, target {}",
            o.name,
            o.entry_count,
            o.residual_rank,
            o.energy_rank,
            if o.target_met { "met" } else { "NOT met" }
        );
    }
    println!(
        "medians: residual-rank {}, energy-rank {}, top-1 grasp term {:.6} (residual) vs {:.6} (energy)",
        report.median_residual_rank,
        report.median_energy_rank,
        report.median_top1_grasp_residual,
        report.median_top1_grasp_energy
    );

    if let Some(dir) = &cfg.output {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::input(format!("output {}: {e}", dir.display())))?;
        let path = dir.join("report.json");
        let mut json = serde_json::to_string_pretty(&report)
            .map_err(|e| Failure::eval(format!("report serialization: {e}")))?;
        json.push('\n');
        std::fs::write(&path, json)
            .map_err(|e| Failure::eval(format!("writing {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// `export`: bake one entry of a saved ranked grasp set into an OBJ scene.
pub fn cmd_export(cfg: &RunConfig, grasps_path: &Path, rank: usize) -> Result<(), Failure> {
    let text = std::fs::read_to_string(grasps_path)
        .map_err(|e| Failure::input(format!("grasps {}: {e}", grasps_path.display())))?;
    let set: RankedGraspSet = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("grasps {}: {e}", grasps_path.display())))?;
    let entry = set
        .entries
        .iter()
        .find(|e| e.rank == rank)
        .ok_or_else(|| {
            Failure::input(format!(
                "no entry with rank {rank} (set has 1..={})",
                set.entries.len()
            ))
        })?;
    let hand = load_hand(cfg)?;
    if entry.pose.joints.len() != hand.dof_count() {
        return Err(Failure::input(format!(
            "hand `{}` has {} joint values but the grasp stores {}",
            cfg.hand,
            hand.dof_count(),
            entry.pose.joints.len()
        )));
    }
    let obj_path = object_path(cfg)?;
    let mesh = load_mesh(obj_path)
        .map_err(|e| Failure::input(format!("object {}: {e}", obj_path.display())))?;
    let out = output_path(cfg)?.clone();
    export_grasp_obj(&out, &mesh, &hand, &entry.pose)
        .map_err(|e| Failure::input(format!("writing {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
