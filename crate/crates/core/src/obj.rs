//! ASCII Wavefront OBJ encoding of triangle meshes (`v` and `f` records).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::{HalfEdgeMesh, MeshError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangular { line: usize, count: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn parse_err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses `v` and triangular `f` records; texture/normal suffixes on face
/// corners are ignored, as are all other record types.
pub fn parse_obj(text: &str) -> Result<HalfEdgeMesh, ObjError> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(line, "vertex needs three coordinates"))?;
                    *c = tok
                        .parse::<f64>()
                        .map_err(|_| parse_err(line, format!("bad coordinate `{tok}`")))?;
                }
                // A fourth (w) component is allowed and ignored.
                positions.push(Vec3::from_array(xyz));
            }
            Some("f") => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(ObjError::NonTriangular {
                        line,
                        count: corners.len(),
                    });
                }
                let mut tri = [0usize; 3];
                for (slot, corner) in tri.iter_mut().zip(corners) {
                    let idx_str = corner.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad face index `{corner}`")))?;
                    let n = positions.len() as i64;
                    let resolved = match idx {
                        0 => return Err(parse_err(line, "face index 0 (OBJ indices are 1-based)")),
                        i if i > 0 && i <= n => i - 1,
                        i if i < 0 && -i <= n => n + i,
                        _ => return Err(parse_err(line, format!("face index {idx} out of range"))),
                    };
                    *slot = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    Ok(HalfEdgeMesh::build(&faces, positions)?)
}

/// Shortest decimal that round-trips the value rounded to 9 significant digits.
pub fn format_coordinate(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

/// Serializes live vertices (renumbered in id order) and faces.
pub fn write_obj(mesh: &HalfEdgeMesh) -> String {
    let mut out = String::new();
    let mut remap = alloc::vec![usize::MAX; mesh.vertex_capacity()];
    for (k, v) in mesh.vertex_ids().enumerate() {
        remap[v] = k + 1;
        let p = mesh.position(v);
        let _ = writeln!(
            out,
            "v {} {} {}",
            format_coordinate(p.x),
            format_coordinate(p.y),
            format_coordinate(p.z)
        );
    }
    for f in mesh.face_ids() {
        let [a, b, c] = mesh.face_vertices(f);
        let _ = writeln!(out, "f {} {} {}", remap[a], remap[b], remap[c]);
    }
    out
}
