//! Mesh file IO: Wavefront OBJ (read/write) and PLY (ASCII and binary
//! little-endian, read) including per-vertex scalar channels such as the
//! `quality` property commonly used to store painted annotations.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// One named group for OBJ export (a mesh plus the group label written with it).
pub struct ObjGroup<'a> {
    pub name: String,
    pub mesh: &'a Mesh,
}

/// Loads a mesh, dispatching on the file extension (`.obj`, `.ply`).
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    match extension(path) {
        Some("obj") => load_obj(path),
        Some("ply") => Ok(load_ply_with_scalar(path, None)?.0),
        _ => Err(Error::parse(
            "mesh",
            path,
            "unsupported extension (expected .obj or .ply)",
        )),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

fn load_obj(path: &Path) -> Result<Mesh> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .clone()
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::parse("mesh", path, format!("bad vertex on line {}", lineno + 1))
                    })?;
                if coords.len() != 3 {
                    return Err(Error::parse(
                        "mesh",
                        path,
                        format!("vertex with {} coordinates on line {}", coords.len(), lineno + 1),
                    ));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|t| parse_obj_index(t, vertices.len()))
                    .collect::<Result<_>>()
                    .map_err(|_| {
                        Error::parse("mesh", path, format!("bad face on line {}", lineno + 1))
                    })?;
                if idx.len() < 3 {
                    return Err(Error::parse(
                        "mesh",
                        path,
                        format!("face with fewer than 3 vertices on line {}", lineno + 1),
                    ));
                }
                // Fan-triangulate polygons.
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // normals, texcoords, groups, materials: ignored on input
        }
    }
    Mesh::new(vertices, faces)
}

/// Parses one OBJ face token (`7`, `7/1`, `7//2`, `-1`) into a 0-based index.
fn parse_obj_index(token: &str, vertex_count: usize) -> Result<u32> {
    let first = token.split('/').next().unwrap_or("");
    let raw: i64 = first
        .parse()
        .map_err(|_| Error::invalid("obj face index", token.to_string()))?;
    let resolved = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        vertex_count as i64 + raw
    } else {
        return Err(Error::invalid("obj face index", "index 0"));
    };
    if resolved < 0 || resolved >= vertex_count as i64 {
        return Err(Error::invalid("obj face index", token.to_string()));
    }
    Ok(resolved as u32)
}

/// Writes one or more named groups into a single OBJ file.
///
/// Vertex indices are offset per group so the groups stay independent when
/// reimported.
pub fn write_obj(path: &Path, groups: &[ObjGroup<'_>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut offset = 1usize; // OBJ indices are 1-based
    for group in groups {
        writeln!(w, "g {}", group.name).map_err(|e| Error::io(path, e))?;
        for v in group.mesh.vertices() {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z).map_err(|e| Error::io(path, e))?;
        }
        for f in group.mesh.faces() {
            writeln!(
                w,
                "f {} {} {}",
                f[0] as usize + offset,
                f[1] as usize + offset,
                f[2] as usize + offset
            )
            .map_err(|e| Error::io(path, e))?;
        }
        offset += group.mesh.vertices().len();
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

struct PlyProperty {
    name: String,
    ty: ScalarType,
    // For list properties: (count type, item type).
    list: Option<(ScalarType, ScalarType)>,
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

/// Loads a PLY mesh, optionally extracting a per-vertex scalar channel.
///
/// When `scalar` is `Some(name)` and the vertex element carries a property of
/// that name, its values are returned alongside the mesh. Pass `None` to skip
/// scalar extraction; the second tuple slot is then `None`.
pub fn load_ply_with_scalar(path: &Path, scalar: Option<&str>) -> Result<(Mesh, Option<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    // --- header ---
    let mut magic = String::new();
    reader.read_line(&mut magic).map_err(|e| Error::io(path, e))?;
    if magic.trim() != "ply" {
        return Err(Error::parse("mesh", path, "missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(Error::parse("mesh", path, "truncated ply header"));
        }
        let line = line.trim().to_string();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                format = match parts.next() {
                    Some("ascii") => Some(PlyFormat::Ascii),
                    Some("binary_little_endian") => Some(PlyFormat::BinaryLe),
                    other => {
                        return Err(Error::parse(
                            "mesh",
                            path,
                            format!("unsupported ply format {other:?}"),
                        ))
                    }
                };
            }
            Some("element") => {
                let name = parts.next().unwrap_or("").to_string();
                let count: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::parse("mesh", path, "bad element count"))?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse("mesh", path, "property before element"))?;
                let first = parts.next().unwrap_or("");
                if first == "list" {
                    let count_ty = ScalarType::parse(parts.next().unwrap_or(""))
                        .ok_or_else(|| Error::parse("mesh", path, "bad list count type"))?;
                    let item_ty = ScalarType::parse(parts.next().unwrap_or(""))
                        .ok_or_else(|| Error::parse("mesh", path, "bad list item type"))?;
                    let name = parts.next().unwrap_or("").to_string();
                    element.properties.push(PlyProperty {
                        name,
                        ty: item_ty,
                        list: Some((count_ty, item_ty)),
                    });
                } else {
                    let ty = ScalarType::parse(first)
                        .ok_or_else(|| Error::parse("mesh", path, "bad property type"))?;
                    let name = parts.next().unwrap_or("").to_string();
                    element.properties.push(PlyProperty {
                        name,
                        ty,
                        list: None,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(
                    "mesh",
                    path,
                    format!("unexpected header line `{other}`"),
                ));
            }
        }
    }
    let format = format.ok_or_else(|| Error::parse("mesh", path, "missing format line"))?;

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut scalars: Option<Vec<f64>> = None;

    for element in &elements {
        match element.name.as_str() {
            "vertex" => {
                let ix = property_index(element, "x", path)?;
                let iy = property_index(element, "y", path)?;
                let iz = property_index(element, "z", path)?;
                let iscalar = scalar.and_then(|name| {
                    element.properties.iter().position(|p| p.name == name)
                });
                if scalar.is_some() && iscalar.is_some() {
                    scalars = Some(Vec::with_capacity(element.count));
                }
                for _ in 0..element.count {
                    let row = read_ply_row(&mut reader, element, format, path)?;
                    vertices.push(Point3::new(
                        row[ix].scalar(),
                        row[iy].scalar(),
                        row[iz].scalar(),
                    ));
                    if let (Some(i), Some(out)) = (iscalar, scalars.as_mut()) {
                        out.push(row[i].scalar());
                    }
                }
            }
            "face" => {
                let ilist = element
                    .properties
                    .iter()
                    .position(|p| {
                        p.list.is_some()
                            && (p.name == "vertex_indices" || p.name == "vertex_index")
                    })
                    .ok_or_else(|| Error::parse("mesh", path, "face element without index list"))?;
                for _ in 0..element.count {
                    let row = read_ply_row(&mut reader, element, format, path)?;
                    let idx = row[ilist].list();
                    if idx.len() < 3 {
                        return Err(Error::parse("mesh", path, "face with < 3 indices"));
                    }
                    let as_u32 = |v: f64| -> Result<u32> {
                        if v < 0.0 || v >= u32::MAX as f64 {
                            return Err(Error::parse("mesh", path, "face index out of range"));
                        }
                        Ok(v as u32)
                    };
                    let anchor = as_u32(idx[0])?;
                    for k in 1..idx.len() - 1 {
                        faces.push([anchor, as_u32(idx[k])?, as_u32(idx[k + 1])?]);
                    }
                }
            }
            _ => {
                // Skip unknown elements record by record.
                for _ in 0..element.count {
                    read_ply_row(&mut reader, element, format, path)?;
                }
            }
        }
    }

    let mesh = Mesh::new(vertices, faces)?;
    if let Some(ref s) = scalars {
        if s.len() != mesh.vertices().len() {
            return Err(Error::parse("mesh", path, "scalar channel length mismatch"));
        }
    }
    if scalar.is_some() && scalars.is_none() {
        return Err(Error::parse(
            "mesh",
            path,
            format!("vertex element has no `{}` property", scalar.unwrap()),
        ));
    }
    Ok((mesh, scalars))
}

fn property_index(element: &PlyElement, name: &str, path: &Path) -> Result<usize> {
    element
        .properties
        .iter()
        .position(|p| p.name == name)
        .ok_or_else(|| Error::parse("mesh", path, format!("vertex element missing `{name}`")))
}

enum PlyValue {
    Scalar(f64),
    List(Vec<f64>),
}

impl PlyValue {
    fn scalar(&self) -> f64 {
        match self {
            PlyValue::Scalar(v) => *v,
            PlyValue::List(_) => f64::NAN,
        }
    }

    fn list(&self) -> &[f64] {
        match self {
            PlyValue::List(v) => v,
            PlyValue::Scalar(_) => &[],
        }
    }
}

fn read_ply_row(
    reader: &mut BufReader<File>,
    element: &PlyElement,
    format: PlyFormat,
    path: &Path,
) -> Result<Vec<PlyValue>> {
    match format {
        PlyFormat::Ascii => {
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
                    return Err(Error::parse("mesh", path, "truncated ply body"));
                }
                if !line.trim().is_empty() {
                    break;
                }
            }
            let mut tokens = line.split_whitespace();
            let mut next_f64 = |what: &str| -> Result<f64> {
                tokens
                    .next()
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| Error::parse("mesh", path, format!("bad {what} value")))
            };
            let mut row = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                if prop.list.is_some() {
                    let count = next_f64("list count")? as usize;
                    let mut items = Vec::with_capacity(count);
                    for _ in 0..count {
                        items.push(next_f64("list item")?);
                    }
                    row.push(PlyValue::List(items));
                } else {
                    row.push(PlyValue::Scalar(next_f64(&prop.name)?));
                }
            }
            Ok(row)
        }
        PlyFormat::BinaryLe => {
            let mut row = Vec::with_capacity(element.properties.len());
            let mut buf = [0u8; 8];
            let mut read_scalar = |reader: &mut BufReader<File>, ty: ScalarType| -> Result<f64> {
                let size = ty.size();
                reader
                    .read_exact(&mut buf[..size])
                    .map_err(|e| Error::io(path, e))?;
                Ok(ty.read_le(&buf[..size]))
            };
            for prop in &element.properties {
                if let Some((count_ty, item_ty)) = prop.list {
                    let count = read_scalar(reader, count_ty)? as usize;
                    let mut items = Vec::with_capacity(count);
                    for _ in 0..count {
                        items.push(read_scalar(reader, item_ty)?);
                    }
                    row.push(PlyValue::List(items));
                } else {
                    row.push(PlyValue::Scalar(read_scalar(reader, prop.ty)?));
                }
            }
            Ok(row)
        }
    }
}
