//! End-to-end tests of the `graspsynth` binary: exit codes, output files,
//! determinism, config echo, and the grid cache.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graspsynth::contact::ContactMap;
use graspsynth::geometry::{shapes, write_obj, ObjGroup};
use nalgebra::Vector3;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_graspsynth")
}

fn run_with_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary must spawn")
}

fn run(args: &[&str]) -> Output {
    run_with_env(args, &[])
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_cylinder_obj(path: &Path) {
    let mesh = shapes::cylinder_mesh(0.025, 0.12, 24);
    write_obj(
        path,
        &[ObjGroup {
            name: "cylinder".into(),
            mesh: &mesh,
        }],
    )
    .unwrap();
}

fn write_band_regions(path: &Path) {
    std::fs::write(
        path,
        "[[region]]\nlabel = 1\nregion = { kind = \"band\", axis = [0.0, 0.0, 1.0], min = -0.04, max = 0.04 }\n",
    )
    .unwrap();
}

/// Shared tiny-budget flags keeping each pipeline run around a second.
const TINY: &[&str] = &[
    "--n-approach",
    "1",
    "--surface-samples",
    "400",
    "--grid-spacing",
    "0.005",
    "--sa-iterations",
    "50",
    "--sa-initial-temperature",
    "0.3",
    "--sa-cooling",
    "0.995",
    "--lm-max-iters",
    "12",
];

fn synthesize_args<'a>(
    object: &'a str,
    contacts: &'a str,
    output: &'a str,
    extra: &[&'a str],
) -> Vec<&'a str> {
    let mut args = vec![
        "synthesize",
        "--object",
        object,
        "--contacts",
        contacts,
        "--output",
        output,
        "--seed",
        "42",
    ];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    args
}

#[test]
fn contactmap_counts_match_the_saved_map_and_honor_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cyl.obj");
    let regions = dir.path().join("band.toml");
    let map_path = dir.path().join("cyl.contactmap");
    write_cylinder_obj(&obj);
    write_band_regions(&regions);

    let out = run(&[
        "contactmap",
        "--object",
        obj.to_str().unwrap(),
        "--contacts",
        regions.to_str().unwrap(),
        "--output",
        map_path.to_str().unwrap(),
        "--surface-samples",
        "500",
        "--contact-threshold",
        "0.45",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);

    let map = ContactMap::load(&map_path).unwrap();
    assert_eq!(map.len(), 500);
    assert_eq!(map.threshold(), 0.45, "threshold flag must be recorded");
    assert!(map.attractive_count() > 0 && map.repulsive_count() > 0);
    // The printed counts are the map's counts.
    assert!(
        text.contains(&format!(
            "{} attractive, {} repulsive of {}",
            map.attractive_count(),
            map.repulsive_count(),
            map.len()
        )),
        "{text}"
    );
    assert!(text.contains("tau 0.45"), "{text}");
}

#[test]
fn constant_scalar_field_labels_everything_attractive() {
    let dir = tempfile::tempdir().unwrap();
    let ply = dir.path().join("tetra.ply");
    // Regular-ish tetrahedron with a constant `contact = 1` channel.
    std::fs::write(
        &ply,
        "ply\nformat ascii 1.0\nelement vertex 4\n\
         property float x\nproperty float y\nproperty float z\n\
         property float contact\n\
         element face 4\nproperty list uchar int vertex_indices\nend_header\n\
         0.02 0.02 0.02 1.0\n0.02 -0.02 -0.02 1.0\n-0.02 0.02 -0.02 1.0\n-0.02 -0.02 0.02 1.0\n\
         3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n",
    )
    .unwrap();
    let map_path = dir.path().join("tetra.contactmap");

    // Threshold 1.0: labelling is boundary-inclusive, so t = 1.0 stays
    // attractive even at the extreme threshold.
    let out = run(&[
        "contactmap",
        "--object",
        ply.to_str().unwrap(),
        "--contacts",
        ply.to_str().unwrap(),
        "--output",
        map_path.to_str().unwrap(),
        "--surface-samples",
        "300",
        "--contact-threshold",
        "1.0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("300 attractive, 0 repulsive of 300"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn synthesize_is_deterministic_echoes_flags_and_exports_top_k() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cyl.obj");
    let regions = dir.path().join("band.toml");
    write_cylinder_obj(&obj);
    write_band_regions(&regions);
    let obj_s = obj.to_str().unwrap();
    let reg_s = regions.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    let ra = run(&synthesize_args(
        obj_s,
        reg_s,
        out_a.to_str().unwrap(),
        &["--top-k", "3"],
    ));
    assert!(ra.status.success(), "{}", stderr(&ra));
    let rb = run(&synthesize_args(
        obj_s,
        reg_s,
        out_b.to_str().unwrap(),
        &[],
    ));
    assert!(rb.status.success(), "{}", stderr(&rb));

    // Same seed, same budget: byte-identical ranked sets.
    let json_a = std::fs::read(out_a.join("grasps.json")).unwrap();
    let json_b = std::fs::read(out_b.join("grasps.json")).unwrap();
    assert_eq!(json_a, json_b);

    // Top-k scenes exist exactly for ranks 1..=3.
    for rank in 1..=3 {
        assert!(out_a.join(format!("grasp_{rank:03}.obj")).exists());
    }
    assert!(!out_a.join("grasp_004.obj").exists());
    assert!(!out_b.join("grasp_001.obj").exists(), "no --top-k, no scenes");

    // The echoed config carries the flag values, not the defaults.
    let echo: toml::Value =
        toml::from_str(&std::fs::read_to_string(out_a.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echo["seed"].as_integer(), Some(42));
    assert_eq!(echo["n_approach"].as_integer(), Some(1));
    assert_eq!(echo["top_k"].as_integer(), Some(3));
    assert_eq!(echo["anneal"]["iterations"].as_integer(), Some(50));
    assert_eq!(echo["lm"]["max_iters"].as_integer(), Some(12));
    // Defaults that were not overridden are echoed too.
    assert_eq!(echo["objective"]["attractive_weight"].as_float(), Some(150.0));

    // Re-running from the echo reproduces the outputs bit-exactly, and a
    // flag still wins over the config file.
    let out_c = dir.path().join("c");
    let rc = run(&[
        "synthesize",
        "--config",
        out_a.join("config.toml").to_str().unwrap(),
        "--output",
        out_c.to_str().unwrap(),
    ]);
    assert!(rc.status.success(), "{}", stderr(&rc));
    let json_c = std::fs::read(out_c.join("grasps.json")).unwrap();
    assert_eq!(json_a, json_c);
}

#[test]
fn thread_count_does_not_change_the_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cyl.obj");
    let regions = dir.path().join("band.toml");
    write_cylinder_obj(&obj);
    write_band_regions(&regions);
    let obj_s = obj.to_str().unwrap();
    let reg_s = regions.to_str().unwrap();

    let mut outputs: Vec<Vec<u8>> = Vec::new();
    for threads in ["1", "2"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let r = run(&synthesize_args(
            obj_s,
            reg_s,
            out_dir.to_str().unwrap(),
            &["--threads", threads],
        ));
        assert!(r.status.success(), "{}", stderr(&r));
        outputs.push(std::fs::read(out_dir.join("grasps.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["synthesize", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("object"), "{}", stderr(&out));

    let out = run(&[
        "synthesize",
        "--object",
        dir.path().join("nowhere.obj").to_str().unwrap(),
        "--contacts",
        dir.path().join("nowhere.toml").to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown config keys are an input error, not a silent ignore.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "definitely_not_a_field = true\n").unwrap();
    let out = run(&["synthesize", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

fn shipped_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests/basic-eval.toml")
}

#[test]
fn eval_runs_the_shipped_manifest_and_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = shipped_manifest();
    let mut args = vec![
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "--seed",
        "7",
    ];
    args.extend_from_slice(TINY);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("scenario ").count(), 3, "{text}");
    assert!(text.contains("medians:"), "{text}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["scenarios"].as_array().unwrap().len(), 3);
    for scenario in report["scenarios"].as_array().unwrap() {
        assert!(scenario["residual_rank"].as_u64().is_some());
        assert!(scenario["energy_rank"].as_u64().is_some());
    }
    for key in [
        "median_residual_rank",
        "median_energy_rank",
        "median_top1_grasp_residual",
        "median_top1_grasp_energy",
    ] {
        assert!(report[key].as_f64().is_some(), "missing {key}");
    }
}

#[test]
fn eval_failure_names_the_scenario_and_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bad.toml");
    std::fs::write(
        &manifest,
        "[[scenario]]\nname = \"ghost-mesh\"\n\
         object = { kind = \"mesh\", path = \"does-not-exist.obj\" }\n\
         contacts = { kind = \"regions\", regions = [ { region = { kind = \"band\", axis = [0.0, 0.0, 1.0], min = -0.01, max = 0.01 }, label = 1 } ] }\n\
         target = { kind = \"contact-agreement\" }\n",
    )
    .unwrap();
    let out = run(&["eval", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("ghost-mesh"), "{}", stderr(&out));
}

#[test]
fn export_bakes_a_named_scene_and_rejects_bad_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("cyl.obj");
    let regions = dir.path().join("band.toml");
    write_cylinder_obj(&obj);
    write_band_regions(&regions);
    let out_dir = dir.path().join("run");
    let r = run(&synthesize_args(
        obj.to_str().unwrap(),
        regions.to_str().unwrap(),
        out_dir.to_str().unwrap(),
        &[],
    ));
    assert!(r.status.success(), "{}", stderr(&r));

    let scene = dir.path().join("scene.obj");
    let grasps = out_dir.join("grasps.json");
    let out = run(&[
        "export",
        "--grasps",
        grasps.to_str().unwrap(),
        "--object",
        obj.to_str().unwrap(),
        "--rank",
        "2",
        "--output",
        scene.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&scene).unwrap();
    assert!(text.contains("g object"));
    assert!(text.contains("g hand_palm"));

    let out = run(&[
        "export",
        "--grasps",
        grasps.to_str().unwrap(),
        "--object",
        obj.to_str().unwrap(),
        "--rank",
        "9999",
        "--output",
        scene.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rank"), "{}", stderr(&out));
}

#[test]
fn grid_cache_is_reused_and_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cache_dir = dir.path().join("cache");
    let obj = dir.path().join("cyl.obj");
    let regions = dir.path().join("band.toml");
    write_cylinder_obj(&obj);
    write_band_regions(&regions);
    let envs = [("GRASPSYNTH_CACHE_DIR", cache_dir.to_str().unwrap())];

    let out_a = dir.path().join("a");
    let ra = run_with_env(
        &synthesize_args(
            obj.to_str().unwrap(),
            regions.to_str().unwrap(),
            out_a.to_str().unwrap(),
            &[],
        ),
        &envs,
    );
    assert!(ra.status.success(), "{}", stderr(&ra));
    assert!(!stderr(&ra).contains("cache hit"));
    let entries: Vec<_> = std::fs::read_dir(&cache_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "one grid cached");
    assert!(entries[0].extension().is_some_and(|e| e == "sdfgrid"));

    let out_b = dir.path().join("b");
    let rb = run_with_env(
        &synthesize_args(
            obj.to_str().unwrap(),
            regions.to_str().unwrap(),
            out_b.to_str().unwrap(),
            &[],
        ),
        &envs,
    );
    assert!(rb.status.success(), "{}", stderr(&rb));
    assert!(stderr(&rb).contains("cache hit"), "{}", stderr(&rb));

    // A cached grid must not change a single byte of the result.
    assert_eq!(
        std::fs::read(out_a.join("grasps.json")).unwrap(),
        std::fs::read(out_b.join("grasps.json")).unwrap()
    );
}
