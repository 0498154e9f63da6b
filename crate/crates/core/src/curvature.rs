//! Discrete curvature operators on triangle meshes.
//!
//! Gaussian curvature comes from the angle deficit, mean curvature from the
//! Laplace–Beltrami operator applied to positions, and the principal
//! curvatures from `k = H ± √(H² − K)`. Point-wise quantities are integrated
//! values divided by the mixed Voronoi area of the vertex.
//!
//! Matrices are indexed by vertex id and sized by the mesh's vertex capacity;
//! rows of removed vertices are empty.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{corner_angle, corner_cot, Vec3};
use crate::mesh::HalfEdgeMesh;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurvatureError {
    #[error("face {0} has collinear vertices")]
    DegenerateAngle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianScheme {
    /// `w_ij = 1 / valence(i)`.
    Uniform,
    /// `w_ij = (cot α_ij + cot β_ij) / 2`.
    Cotangent,
}

/// `(L x)_i = Σ_j w_ij (x_j − x_i)`: positive off-diagonal weights, diagonal
/// equal to minus the row sum, so constants lie in the kernel.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    pub matrix: CsrMatrix,
    pub scheme: LaplacianScheme,
    /// Mixed Voronoi area per vertex.
    pub areas: Vec<f64>,
}

impl LaplacianOperator {
    pub fn apply(&self, x: &[Vec3]) -> Vec<Vec3> {
        self.matrix.mul_vec3(x)
    }
}

/// Per-vertex curvature quantities.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    /// Integrated angle deficit (2π or π minus the incident angle sum).
    pub deficit: Vec<f64>,
    pub gaussian: Vec<f64>,
    pub mean: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub area: Vec<f64>,
    pub boundary: Vec<bool>,
}

impl CurvatureField {
    pub fn compute(mesh: &HalfEdgeMesh) -> Result<Self, CurvatureError> {
        let lap = build_laplacian(mesh, LaplacianScheme::Cotangent)?;
        let deficit = angle_deficits(mesh)?;
        let gaussian: Vec<f64> = deficit
            .iter()
            .zip(&lap.areas)
            .map(|(&d, &a)| if a > 0.0 { d / a } else { 0.0 })
            .collect();
        let mean = mean_curvature(mesh, &lap);
        let (k1, k2) = principal_curvatures(&gaussian, &mean);
        let boundary = (0..mesh.vertex_capacity())
            .map(|v| mesh.is_vertex_live(v) && mesh.is_border_vertex(v))
            .collect();
        Ok(CurvatureField {
            deficit,
            gaussian,
            mean,
            k1,
            k2,
            area: lap.areas,
            boundary,
        })
    }

    /// `max(|k1|, |k2|)` per vertex.
    pub fn max_abs_curvature(&self) -> Vec<f64> {
        self.k1
            .iter()
            .zip(&self.k2)
            .map(|(a, b)| a.abs().max(b.abs()))
            .collect()
    }
}

fn check_face(mesh: &HalfEdgeMesh, f: usize) -> Result<(), CurvatureError> {
    let [a, b, c] = mesh.face_positions(f);
    let u = b - a;
    let v = c - a;
    let cross = u.cross(v).norm();
    if !(cross > f64::EPSILON * u.norm() * v.norm()) {
        return Err(CurvatureError::DegenerateAngle(f));
    }
    Ok(())
}

/// Raw angle deficit per vertex: `2π − Σθ` inside, `π − Σθ` on the border.
pub fn angle_deficits(mesh: &HalfEdgeMesh) -> Result<Vec<f64>, CurvatureError> {
    let mut out = vec![0.0; mesh.vertex_capacity()];
    for v in mesh.vertex_ids() {
        out[v] = if mesh.is_border_vertex(v) {
            PI
        } else {
            2.0 * PI
        };
    }
    for f in mesh.face_ids() {
        check_face(mesh, f)?;
        let vs = mesh.face_vertices(f);
        let ps = mesh.face_positions(f);
        for k in 0..3 {
            out[vs[k]] -= corner_angle(ps[k], ps[(k + 1) % 3], ps[(k + 2) % 3]);
        }
    }
    Ok(out)
}

/// Mixed Voronoi vertex areas: Voronoi region inside non-obtuse triangles,
/// half (obtuse corner) or quarter (other corners) of obtuse triangles.
pub fn mixed_voronoi_areas(mesh: &HalfEdgeMesh) -> Result<Vec<f64>, CurvatureError> {
    let mut area = vec![0.0; mesh.vertex_capacity()];
    for f in mesh.face_ids() {
        check_face(mesh, f)?;
        let vs = mesh.face_vertices(f);
        let p = mesh.face_positions(f);
        let tri_area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
        let dots = [
            (p[1] - p[0]).dot(p[2] - p[0]),
            (p[2] - p[1]).dot(p[0] - p[1]),
            (p[0] - p[2]).dot(p[1] - p[2]),
        ];
        if let Some(obtuse) = (0..3).find(|&k| dots[k] < 0.0) {
            for k in 0..3 {
                area[vs[k]] += if k == obtuse {
                    tri_area / 2.0
                } else {
                    tri_area / 4.0
                };
            }
        } else {
            for k in 0..3 {
                let (i, j, l) = (k, (k + 1) % 3, (k + 2) % 3);
                // Edge ij is opposite corner l, edge il opposite corner j.
                let cot_l = corner_cot(p[l], p[i], p[j]);
                let cot_j = corner_cot(p[j], p[l], p[i]);
                area[vs[i]] += ((p[j] - p[i]).norm_squared() * cot_l
                    + (p[l] - p[i]).norm_squared() * cot_j)
                    / 8.0;
            }
        }
    }
    Ok(area)
}

pub fn build_laplacian(
    mesh: &HalfEdgeMesh,
    scheme: LaplacianScheme,
) -> Result<LaplacianOperator, CurvatureError> {
    let n = mesh.vertex_capacity();
    let areas = mixed_voronoi_areas(mesh)?;
    let mut trip = Vec::new();
    match scheme {
        LaplacianScheme::Uniform => {
            return Ok(LaplacianOperator {
                matrix: uniform_laplacian(mesh),
                scheme,
                areas,
            });
        }
        LaplacianScheme::Cotangent => {
            for v in mesh.vertex_ids() {
                let mut diag = 0.0;
                for h in mesh.outgoing(v) {
                    let mut w = 0.0;
                    for side in [h, mesh.twin(h)] {
                        if mesh.is_border_halfedge(side) {
                            continue;
                        }
                        let opp = mesh.origin(mesh.prev(side));
                        let a = mesh.position(opp);
                        w += 0.5
                            * corner_cot(
                                a,
                                mesh.position(mesh.origin(side)),
                                mesh.position(mesh.dest(side)),
                            );
                    }
                    trip.push((v, mesh.dest(h), w));
                    diag -= w;
                }
                trip.push((v, v, diag));
            }
        }
    }
    Ok(LaplacianOperator {
        matrix: CsrMatrix::from_triplets(n, trip),
        scheme,
        areas,
    })
}

/// Gaussian curvature `K_i = deficit_i / A_i`.
pub fn gaussian_curvature(mesh: &HalfEdgeMesh) -> Result<Vec<f64>, CurvatureError> {
    let deficit = angle_deficits(mesh)?;
    let areas = mixed_voronoi_areas(mesh)?;
    Ok(deficit
        .iter()
        .zip(&areas)
        .map(|(&d, &a)| if a > 0.0 { d / a } else { 0.0 })
        .collect())
}

/// Signed mean curvature, positive where `L x` points against the outward
/// vertex normal (convex regions). Cotangent operators are normalized by the
/// vertex area, `H = ½‖(Lx)_i‖ / A_i`; uniform operators return `½‖(Lx)_i‖`.
pub fn mean_curvature(mesh: &HalfEdgeMesh, laplacian: &LaplacianOperator) -> Vec<f64> {
    let lx = laplacian.apply(mesh.positions());
    let mut h = vec![0.0; mesh.vertex_capacity()];
    for v in mesh.vertex_ids() {
        let mut mag = 0.5 * lx[v].norm();
        if laplacian.scheme == LaplacianScheme::Cotangent {
            let a = laplacian.areas[v];
            mag = if a > 0.0 { mag / a } else { 0.0 };
        }
        let sign = if lx[v].dot(mesh.vertex_normal(v)) > 0.0 {
            -1.0
        } else {
            1.0
        };
        h[v] = sign * mag;
    }
    h
}

/// `k1, k2 = H ± √max(H² − K, 0)`.
pub fn principal_curvatures(gaussian: &[f64], mean: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(gaussian.len(), mean.len());
    gaussian
        .iter()
        .zip(mean)
        .map(|(&k, &h)| {
            let d = (h * h - k).max(0.0).sqrt();
            (h + d, h - d)
        })
        .unzip()
}

/// Graph Laplacian `D − A` (unit edge weights, positive semidefinite).
pub fn combinatorial_laplacian(mesh: &HalfEdgeMesh) -> CsrMatrix {
    let mut trip = Vec::new();
    for v in mesh.vertex_ids() {
        let mut deg = 0.0;
        for h in mesh.outgoing(v) {
            trip.push((v, mesh.dest(h), -1.0));
            deg += 1.0;
        }
        trip.push((v, v, deg));
    }
    CsrMatrix::from_triplets(mesh.vertex_capacity(), trip)
}

/// Uniform Laplacian: row `i` is `mean(x_j) − x_i` over the one-ring.
pub fn uniform_laplacian(mesh: &HalfEdgeMesh) -> CsrMatrix {
    let mut trip = Vec::new();
    for v in mesh.vertex_ids() {
        let w = 1.0 / mesh.valence(v) as f64;
        for h in mesh.outgoing(v) {
            trip.push((v, mesh.dest(h), w));
        }
        trip.push((v, v, -1.0));
    }
    CsrMatrix::from_triplets(mesh.vertex_capacity(), trip)
}

/// Bending operator `LᵀL` of the uniform Laplacian; symmetric positive
/// semidefinite, so `tr(xᵀ B x) = ‖L x‖²`.
pub fn uniform_bilaplacian(mesh: &HalfEdgeMesh) -> CsrMatrix {
    let l = uniform_laplacian(mesh);
    l.transpose().matmul(&l)
}

/// `Σ deficit − 2πχ`; zero up to roundoff on closed meshes.
pub fn gauss_bonnet_residual(mesh: &HalfEdgeMesh) -> Result<f64, CurvatureError> {
    let deficits = angle_deficits(mesh)?;
    let chi = mesh.topology_summary().euler_characteristic as f64;
    let total: f64 = mesh.vertex_ids().map(|v| deficits[v]).sum();
    Ok(total - 2.0 * PI * chi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::{planar_grid, tetrahedron};
    use crate::primitives::{grid_torus, icosahedron, icosphere};

    #[test]
    fn flat_grid_interior_has_no_deficit_and_no_mean_curvature() {
        let m = planar_grid(4);
        let d = angle_deficits(&m).unwrap();
        let lap = build_laplacian(&m, LaplacianScheme::Cotangent).unwrap();
        let h = mean_curvature(&m, &lap);
        for v in m.vertex_ids().filter(|&v| !m.is_border_vertex(v)) {
            assert!(d[v].abs() < 1e-14);
            assert!(h[v].abs() < 1e-14);
        }
    }

    #[test]
    fn cube_corner_deficit() {
        // Three unit right-angle squares meeting at the origin, as 6 triangles.
        let p = vec![
            Vec3::ZERO,
            Vec3::X,
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::Y,
            Vec3::new(0.0, 1.0, 1.0),
            Vec3::Z,
            Vec3::new(1.0, 0.0, 1.0),
        ];
        let t = [
            [0, 2, 1],
            [0, 3, 2],
            [0, 4, 3],
            [0, 5, 4],
            [0, 6, 5],
            [0, 1, 6],
        ];
        let m = HalfEdgeMesh::build(&t, p).unwrap();
        assert!(!m.is_border_vertex(0));
        let d = angle_deficits(&m).unwrap();
        assert!((d[0] - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_bonnet_on_closed_meshes() {
        for m in [
            tetrahedron(),
            icosphere(3, 1.0),
            grid_torus(20, 9, 1.0, 0.3),
        ] {
            let r = gauss_bonnet_residual(&m).unwrap();
            assert!(r.abs() < 1e-8 * m.num_faces() as f64, "residual {r}");
        }
    }

    #[test]
    fn uniform_laplacian_of_icosahedron() {
        let m = icosahedron(1.0);
        let l = build_laplacian(&m, LaplacianScheme::Uniform)
            .unwrap()
            .matrix;
        for i in 0..12 {
            let (cols, vals) = l.row(i);
            assert_eq!(cols.len(), 6);
            for (&j, &v) in cols.iter().zip(vals) {
                if i == j {
                    assert_eq!(v, -1.0);
                } else {
                    assert!((v - 0.2).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn constants_in_kernel() {
        let m = grid_torus(12, 8, 1.0, 0.4);
        let ones = vec![Vec3::splat(1.0); m.vertex_capacity()];
        for scheme in [LaplacianScheme::Uniform, LaplacianScheme::Cotangent] {
            let l = build_laplacian(&m, scheme).unwrap();
            for v in l.apply(&ones) {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn equilateral_cotangent_weights() {
        // Equilateral triangulated patch: every interior edge weight is
        // (cot 60° + cot 60°)/2 = 1/√3.
        let s3 = 3f64.sqrt() / 2.0;
        let mut p = Vec::new();
        let n = 6;
        for j in 0..=n {
            for i in 0..=n {
                p.push(Vec3::new(i as f64 + 0.5 * j as f64, s3 * j as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                t.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                t.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let m = HalfEdgeMesh::build(&t, p).unwrap();
        let l = build_laplacian(&m, LaplacianScheme::Cotangent)
            .unwrap()
            .matrix;
        let expected = 1.0 / 3f64.sqrt();
        for h in m.edge_ids().filter(|&h| !m.is_border_edge(h)) {
            let w = l.get(m.origin(h), m.dest(h));
            assert!((w - expected).abs() < 1e-12, "{w}");
        }
    }

    #[test]
    fn principal_curvature_closed_forms() {
        let (k1, k2) = principal_curvatures(&[1.0, 0.0, -1.0], &[1.0, 0.5, 0.0]);
        assert_eq!((k1[0], k2[0]), (1.0, 1.0));
        assert_eq!((k1[1], k2[1]), (1.0, 0.0));
        assert_eq!((k1[2], k2[2]), (1.0, -1.0));
    }

    #[test]
    fn sphere_mean_curvature_is_about_one() {
        let m = icosphere(4, 1.0);
        let lap = build_laplacian(&m, LaplacianScheme::Cotangent).unwrap();
        let h = mean_curvature(&m, &lap);
        for v in m.vertex_ids() {
            assert!((h[v] - 1.0).abs() < 0.05, "H = {}", h[v]);
        }
    }

    #[test]
    fn cylinder_side_mean_curvature() {
        // Open tube of radius r, length 8r; check the middle ring.
        let r = 0.5;
        let (nu, nz) = (64usize, 64usize);
        let mut p = Vec::new();
        for k in 0..=nz {
            for i in 0..nu {
                let a = 2.0 * PI * i as f64 / nu as f64;
                p.push(Vec3::new(
                    r * a.cos(),
                    r * a.sin(),
                    8.0 * r * k as f64 / nz as f64,
                ));
            }
        }
        let id = |i: usize, k: usize| k * nu + i % nu;
        let mut t = Vec::new();
        for k in 0..nz {
            for i in 0..nu {
                t.push([id(i, k), id(i + 1, k), id(i + 1, k + 1)]);
                t.push([id(i, k), id(i + 1, k + 1), id(i, k + 1)]);
            }
        }
        let m = HalfEdgeMesh::build(&t, p).unwrap();
        let lap = build_laplacian(&m, LaplacianScheme::Cotangent).unwrap();
        let h = mean_curvature(&m, &lap);
        for i in 0..nu {
            let v = id(i, nz / 2);
            assert!((h[v] - 1.0 / (2.0 * r)).abs() < 0.02, "H = {}", h[v]);
        }
    }
}
