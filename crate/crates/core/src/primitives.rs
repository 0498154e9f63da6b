//! Closed, orientable starting surfaces of prescribed genus.
//!
//! * genus 0: icosphere
//! * genus 1: regular grid torus
//! * genus ≥ 2: a slab with `g` square through-holes in a row along x,
//!   built as the boundary of a voxel solid and then rounded by smoothing.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::Vec3;
use crate::mesh::HalfEdgeMesh;

/// Smallest number of segments allowed around any loop of a primitive.
pub const MIN_LOOP_SEGMENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrimitiveError {
    #[error("resolution {0} is below the minimum of {MIN_LOOP_SEGMENTS} segments per loop")]
    ResolutionTooLow(usize),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveSpec {
    pub genus: u32,
    /// Minimum number of segments around every loop (meridian and longitude
    /// of every handle; great circles for the sphere).
    pub resolution: usize,
    /// Radius of the origin-centred sphere the primitive is fitted into.
    pub scale: f64,
}

impl Default for PrimitiveSpec {
    fn default() -> Self {
        PrimitiveSpec {
            genus: 1,
            resolution: 16,
            scale: 1.0,
        }
    }
}

pub fn make_primitive(spec: &PrimitiveSpec) -> Result<HalfEdgeMesh, PrimitiveError> {
    if spec.resolution < MIN_LOOP_SEGMENTS {
        return Err(PrimitiveError::ResolutionTooLow(spec.resolution));
    }
    if !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(PrimitiveError::InvalidScale(spec.scale));
    }
    let mut mesh = match spec.genus {
        0 => {
            let mut level = 0;
            while 10 << level < spec.resolution {
                level += 1;
            }
            icosphere(level, 1.0)
        }
        1 => {
            let minor = spec.resolution;
            grid_torus(3 * minor, minor, 0.75, 0.25)
        }
        g => handle_chain(g as usize, spec.resolution.div_ceil(4)),
    };
    fit_to_sphere(&mut mesh, spec.scale);
    #[cfg(feature = "invariant-checks")]
    crate::invariants::assert_pipeline_mesh(&mesh, "make_primitive");
    Ok(mesh)
}

/// Translates the bounding-box centre to the origin and scales so the
/// farthest vertex lies at distance `radius`.
pub fn fit_to_sphere(mesh: &mut HalfEdgeMesh, radius: f64) {
    let (lo, hi) = mesh.bounding_box();
    let centre = (lo + hi) * 0.5;
    let far = mesh
        .vertex_ids()
        .map(|v| (mesh.position(v) - centre).norm())
        .fold(0.0, f64::max);
    let s = if far > 0.0 { radius / far } else { 1.0 };
    mesh.transform_positions(|p| (p - centre) * s);
}

pub fn icosahedron(radius: f64) -> HalfEdgeMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let positions = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized() * radius)
        .collect();
    let faces = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    HalfEdgeMesh::build(&faces, positions).expect("icosahedron is a valid closed mesh")
}

/// Icosahedron subdivided `level` times (1→4 midpoint split), with every
/// vertex projected onto the sphere of `radius`.
pub fn icosphere(level: usize, radius: f64) -> HalfEdgeMesh {
    let base = icosahedron(1.0);
    let mut positions: Vec<Vec3> = base.positions().to_vec();
    let mut faces = base.triangles();
    for _ in 0..level {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let mut mid = |i: usize, j: usize| {
                *midpoints.entry((i.min(j), i.max(j))).or_insert_with(|| {
                    positions.push(((positions[i] + positions[j]) * 0.5).normalized());
                    positions.len() - 1
                })
            };
            let ab = mid(a, b);
            let bc = mid(b, c);
            let ca = mid(c, a);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for p in &mut positions {
        *p *= radius;
    }
    HalfEdgeMesh::build(&faces, positions).expect("icosphere is a valid closed mesh")
}

/// Torus around the z-axis with `major_segments × minor_segments` quads,
/// each split along the same diagonal (every vertex has valence 6).
pub fn grid_torus(
    major_segments: usize,
    minor_segments: usize,
    major_radius: f64,
    minor_radius: f64,
) -> HalfEdgeMesh {
    let (nu, nv) = (major_segments, minor_segments);
    let mut positions = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let ring = major_radius + minor_radius * v.cos();
            positions.push(Vec3::new(
                ring * u.cos(),
                ring * u.sin(),
                minor_radius * v.sin(),
            ));
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    HalfEdgeMesh::build(&faces, positions).expect("grid torus is a valid closed mesh")
}

/// Genus-`genus` slab: the boundary of a voxel block with a row of square
/// through-holes, `cells` voxels per hole side, bar width and thickness.
fn handle_chain(genus: usize, cells: usize) -> HalfEdgeMesh {
    let c = cells;
    let nx = c * (2 * genus + 1);
    let ny = 3 * c;
    let nz = c;
    let solid = |i: isize, j: isize, k: isize| -> bool {
        if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
            return false;
        }
        let (i, j) = (i as usize, j as usize);
        let in_hole_row = j >= c && j < 2 * c;
        let in_hole_col = i >= c && (i - c) % (2 * c) < c && i < nx - c;
        !(in_hole_row && in_hole_col)
    };

    let mut lattice: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |p: (usize, usize, usize), positions: &mut Vec<Vec3>| -> usize {
        *lattice.entry(p).or_insert_with(|| {
            positions.push(Vec3::new(p.0 as f64, p.1 as f64, p.2 as f64));
            positions.len() - 1
        })
    };

    // For each axis-aligned direction, the quad corners in counter-clockwise
    // order seen from outside (offsets relative to the voxel's low corner).
    type Quad = [(usize, usize, usize); 4];
    let dirs: [((isize, isize, isize), Quad); 6] = [
        ((1, 0, 0), [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)]),
        ((-1, 0, 0), [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)]),
        ((0, 1, 0), [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)]),
        ((0, -1, 0), [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)]),
        ((0, 0, 1), [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]),
        ((0, 0, -1), [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)]),
    ];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                if !solid(i as isize, j as isize, k as isize) {
                    continue;
                }
                for (d, quad) in &dirs {
                    if solid(i as isize + d.0, j as isize + d.1, k as isize + d.2) {
                        continue;
                    }
                    let q = quad.map(|o| vid((i + o.0, j + o.1, k + o.2), &mut positions));
                    // Alternate diagonals to avoid long valence streaks.
                    if (i + j + k) % 2 == 0 {
                        faces.push([q[0], q[1], q[2]]);
                        faces.push([q[0], q[2], q[3]]);
                    } else {
                        faces.push([q[1], q[2], q[3]]);
                        faces.push([q[1], q[3], q[0]]);
                    }
                }
            }
        }
    }
    let mut mesh =
        HalfEdgeMesh::build(&faces, positions).expect("voxel boundary is a closed manifold");
    round_corners(&mut mesh, 2 * c);
    mesh
}

/// Taubin λ/μ smoothing: rounds the voxel staircase without the shrinkage
/// of plain Laplacian smoothing.
fn round_corners(mesh: &mut HalfEdgeMesh, iterations: usize) {
    let n = mesh.vertex_capacity();
    let mut scratch = vec![Vec3::ZERO; n];
    for it in 0..2 * iterations {
        let w = if it % 2 == 0 { 0.5 } else { -0.53 };
        for v in mesh.vertex_ids() {
            let (sum, count) = mesh.outgoing(v).fold((Vec3::ZERO, 0usize), |(s, k), h| {
                (s + mesh.position(mesh.dest(h)), k + 1)
            });
            let p = mesh.position(v);
            scratch[v] = p + (sum / count as f64 - p) * w;
        }
        mesh.set_positions(&scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genus_matches_spec_for_small_genera() {
        for g in 0..=6u32 {
            let m = make_primitive(&PrimitiveSpec {
                genus: g,
                resolution: 8,
                scale: 1.0,
            })
            .unwrap();
            m.validate().unwrap();
            let s = m.topology_summary();
            assert_eq!(s.genus, Some(g), "genus {g}");
            assert_eq!(s.euler_characteristic, 2 - 2 * g as i64);
            assert!(m.face_ids().all(|f| m.face_area(f) > 0.0));
        }
    }

    #[test]
    fn genus_five_euler_characteristic_from_counts() {
        let m = make_primitive(&PrimitiveSpec {
            genus: 5,
            resolution: 8,
            scale: 1.0,
        })
        .unwrap();
        let s = m.topology_summary();
        assert_eq!(
            s.num_vertices as i64 + s.num_faces as i64 - s.num_edges as i64,
            -8
        );
        assert_eq!(2 * s.num_edges, 3 * s.num_faces);
    }

    #[test]
    fn fits_inside_scale_sphere() {
        for g in [0, 1, 3] {
            let m = make_primitive(&PrimitiveSpec {
                genus: g,
                resolution: 12,
                scale: 0.7,
            })
            .unwrap();
            let far = m.positions().iter().map(|p| p.norm()).fold(0.0, f64::max);
            assert!(far <= 0.7 + 1e-12);
            assert!(far > 0.6);
        }
    }

    #[test]
    fn resolution_too_low() {
        let err = make_primitive(&PrimitiveSpec {
            genus: 2,
            resolution: 7,
            scale: 1.0,
        })
        .unwrap_err();
        assert_eq!(err, PrimitiveError::ResolutionTooLow(7));
    }

    #[test]
    fn handle_loops_have_enough_segments() {
        // Two-cell holes: perimeter 8, bar cross-section 2c + 2c = 8.
        let m = handle_chain(2, 2);
        assert_eq!(m.topology_summary().genus, Some(2));
    }

    #[test]
    fn icosphere_counts() {
        let m = icosphere(2, 1.0);
        assert_eq!(m.num_faces(), 320);
        assert_eq!(m.num_vertices(), 162);
        for v in m.vertex_ids() {
            assert!((m.position(v).norm() - 1.0).abs() < 1e-14);
        }
    }
}
