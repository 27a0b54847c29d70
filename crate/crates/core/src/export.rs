//! Scene export: bakes a posed hand and its object into an OBJ file with
//! named groups, for inspection in any mesh viewer.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{shapes, write_obj, Mesh, ObjGroup, PrimitiveShape};
use crate::hand::{HandModel, HandPose, SegmentShape};

/// Tessellation detail for primitive hand segments. Display quality only;
/// nothing downstream reads these meshes back.
const SPHERE_SUBDIVISIONS: u32 = 2;
const CAPSULE_SEGMENTS: u32 = 24;
const CAPSULE_RINGS: u32 = 8;

/// Display mesh for a segment shape, in the shape's local frame.
fn shape_mesh(shape: &SegmentShape) -> Mesh {
    match shape {
        SegmentShape::Primitive(PrimitiveShape::Sphere { radius }) => {
            shapes::icosphere(*radius, SPHERE_SUBDIVISIONS)
        }
        SegmentShape::Primitive(PrimitiveShape::Capsule {
            radius,
            half_length,
        }) => shapes::capsule_mesh(*radius, *half_length, CAPSULE_SEGMENTS, CAPSULE_RINGS),
        SegmentShape::Primitive(PrimitiveShape::Box { half_extents }) => {
            shapes::box_mesh(Vector3::from(*half_extents))
        }
        SegmentShape::Grid { mesh, .. } => mesh.clone(),
    }
}

/// Hand segment display meshes baked into the world frame at `pose`,
/// paired with their segment names.
pub fn posed_hand_meshes(hand: &HandModel, pose: &HandPose) -> Vec<(String, Mesh)> {
    let fk = hand.forward_kinematics(pose);
    hand.segments()
        .iter()
        .enumerate()
        .map(|(k, seg)| {
            (
                seg.name.clone(),
                shape_mesh(&seg.shape).transformed(&fk.shape_world[k]),
            )
        })
        .collect()
}

/// Writes the grasp scene as OBJ: group `object` plus one `hand_<segment>`
/// group per hand segment, all in world coordinates. Takes the bare object
/// mesh so export never needs a distance grid.
pub fn export_grasp_obj(
    path: &Path,
    object: &Mesh,
    hand: &HandModel,
    pose: &HandPose,
) -> Result<()> {
    let segment_meshes = posed_hand_meshes(hand, pose);
    let mut groups = vec![ObjGroup {
        name: "object".into(),
        mesh: object,
    }];
    for (name, mesh) in &segment_meshes {
        groups.push(ObjGroup {
            name: format!("hand_{name}"),
            mesh,
        });
    }
    write_obj(path, &groups)
}
