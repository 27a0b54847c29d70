//! On-disk hand description (`.handcfg`, TOML) and the built-in hand models
//! shipped with the crate.

use serde::Deserialize;

/// Raw TOML schema of a hand configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandConfig {
    /// Display name, also used to report validation errors.
    pub name: String,
    /// Name of the root segment.
    pub palm: String,
    /// Standoff added between the palm origin and the approach point when a
    /// grasp seed is instantiated (metres).
    pub palm_offset: f64,
    /// Palm-local direction that faces the object when approaching.
    pub approach_axis: [f64; 3],
    pub segments: Vec<SegmentConfig>,
    pub joints: Vec<JointConfig>,
    pub thumb: ThumbConfig,
    #[serde(default)]
    pub contact_sites: Vec<SiteConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub name: String,
    pub shape: ShapeConfig,
    /// Pose of the shape's local frame within the segment frame.
    #[serde(default)]
    pub shape_pose: PoseConfig,
    /// Override for the number of collision check points on this segment.
    #[serde(default)]
    pub check_points: Option<usize>,
}

/// Shape of one segment: an analytic primitive or a mesh converted to a
/// distance grid at load time.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Sphere {
        radius: f64,
    },
    Capsule {
        radius: f64,
        half_length: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
    /// Mesh path is resolved relative to the config file's directory.
    Mesh {
        path: String,
        /// Grid spacing for the segment's distance field (metres).
        #[serde(default)]
        spacing: Option<f64>,
    },
}

/// Translation plus rotation as a scaled axis (angle = vector norm).
#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub rotation: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub name: String,
    /// Parent segment name.
    pub parent: String,
    /// Child segment name (each non-palm segment is the child of exactly one joint).
    pub child: String,
    /// Fixed transform from the parent frame to the joint frame.
    #[serde(default)]
    pub origin: PoseConfig,
    /// Rotation axis in the joint frame.
    pub axis: [f64; 3],
    /// `[lower, upper]` joint limits in radians.
    pub limits: [f64; 2],
    /// Index into the pose's joint vector; 0..D-1, each used exactly once.
    pub dof: usize,
    /// Joint value in the canonical open pose.
    #[serde(default)]
    pub open: f64,
    /// Closing direction: +1 (increase to close), -1, or 0 (not a closing joint).
    #[serde(default)]
    pub closing: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThumbConfig {
    /// Segment carrying the thumb reference point.
    pub segment: String,
    /// Reference point in that segment's frame; should lie on the surface.
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub segment: String,
    /// Desired contact point in the segment frame; should lie on the surface.
    pub point: [f64; 3],
}

/// Names of the hand models shipped with the crate.
pub fn builtin_names() -> &'static [&'static str] {
    &["barrett-like", "allegro-like", "human-like"]
}

/// TOML source of a built-in hand model.
pub fn builtin_config_str(name: &str) -> Option<&'static str> {
    match name {
        "barrett-like" => Some(include_str!("../../assets/hands/barrett-like.handcfg")),
        "allegro-like" => Some(include_str!("../../assets/hands/allegro-like.handcfg")),
        "human-like" => Some(include_str!("../../assets/hands/human-like.handcfg")),
        _ => None,
    }
}
