//! Checks against independent reference computations.

use std::collections::BTreeMap;

use genusforge_core::geometry::Mat3;
use genusforge_core::metrics::{chamfer_distance, icp_align, volume_iou};
use genusforge_core::optimize::{AdamParams, OptimizerState};
use genusforge_core::primitives::{grid_torus, icosphere, make_primitive, PrimitiveSpec};
use genusforge_core::{HalfEdgeMesh, Vec3};

/// Rank over GF(2) of a 0/1 matrix given as rows of bit sets.
fn gf2_rank(mut rows: Vec<Vec<u64>>) -> usize {
    let words = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..words * 64 {
        let (w, b) = (col / 64, 1u64 << (col % 64));
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][w] & b != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & b != 0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x ^= y;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// First Betti number over GF(2) from the raw triangle list, using no mesh
/// machinery: β1 = |E| − rank ∂1 − rank ∂2.
fn betti1(triangles: &[[usize; 3]], num_vertices: usize) -> usize {
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let next = edges.len();
            edges.entry(key).or_insert(next);
        }
    }
    let ne = edges.len();
    let vwords = num_vertices.div_ceil(64);
    let ewords = ne.div_ceil(64);
    // ∂1: one row per edge over vertex columns.
    let d1: Vec<Vec<u64>> = edges
        .keys()
        .map(|&(a, b)| {
            let mut row = vec![0u64; vwords];
            row[a / 64] |= 1 << (a % 64);
            row[b / 64] |= 1 << (b % 64);
            row
        })
        .collect();
    // ∂2: one row per face over edge columns.
    let d2: Vec<Vec<u64>> = triangles
        .iter()
        .map(|t| {
            let mut row = vec![0u64; ewords];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let e = edges[&(a.min(b), a.max(b))];
                row[e / 64] ^= 1 << (e % 64);
            }
            row
        })
        .collect();
    ne - gf2_rank(d1) - gf2_rank(d2)
}

#[test]
fn genus_agrees_with_gf2_homology() {
    for genus in 0..=4 {
        let mesh = make_primitive(&PrimitiveSpec {
            genus,
            resolution: 8,
            scale: 1.0,
        })
        .unwrap();
        let b1 = betti1(&mesh.triangles(), mesh.num_vertices());
        assert_eq!(b1, 2 * genus as usize, "genus {genus}");
        assert_eq!(mesh.topology_summary().genus, Some(genus));
    }
}

fn asymmetric_blob() -> HalfEdgeMesh {
    let mut m = icosphere(3, 1.0);
    m.transform_positions(|p| {
        Vec3::new(
            1.4 * p.x + 0.2 * p.y * p.y,
            0.8 * p.y,
            0.6 * p.z + 0.3 * p.x * p.x,
        )
    });
    m
}

#[test]
fn icp_recovers_ten_degree_rotation() {
    let source = asymmetric_blob();
    let rot = Mat3::rotation(Vec3::Z, 10f64.to_radians());
    let mut target = source.clone();
    target.transform_positions(|p| rot.mul_vec(p));
    let res = icp_align(&source, &target, 200, 4000, 11).unwrap();
    let err = res
        .transform
        .rotation
        .mul_mat(&rot.transpose())
        .rotation_angle()
        .to_degrees();
    assert!(err < 0.1, "rotation error {err}°");
    assert!(res.transform.translation.norm() < 1e-3);
    for w in res.errors.windows(2) {
        assert!(
            w[1] <= w[0] * (1.0 + 1e-12),
            "ICP error increased: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn icp_identity_on_identical_meshes() {
    let m = asymmetric_blob();
    let res = icp_align(&m, &m, 50, 2000, 3).unwrap();
    let r = res.transform.rotation;
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((r.rows[i][j] - expect).abs() < 1e-9);
        }
    }
    assert!(res.transform.translation.norm() < 1e-9);
}

#[test]
fn chamfer_is_symmetric_and_rigidly_invariant() {
    let a = asymmetric_blob();
    let mut b = icosphere(3, 1.0);
    b.transform_positions(|p| p * 1.1);
    assert_eq!(
        chamfer_distance(&a, &b, 3000, 5).unwrap(),
        chamfer_distance(&b, &a, 3000, 5).unwrap()
    );

    let rot = Mat3::rotation(Vec3::new(1.0, 2.0, -0.5).normalized(), 0.9);
    let shift = Vec3::new(0.3, -2.0, 0.7);
    let (mut ra, mut rb) = (a.clone(), b.clone());
    ra.transform_positions(|p| rot.mul_vec(p) + shift);
    rb.transform_positions(|p| rot.mul_vec(p) + shift);
    let before = chamfer_distance(&a, &b, 3000, 5).unwrap();
    let after = chamfer_distance(&ra, &rb, 3000, 5).unwrap();
    assert!((before - after).abs() < 1e-6);
}

#[test]
fn iou_rigid_invariance_within_a_voxel_layer() {
    let a = grid_torus(48, 24, 0.7, 0.3);
    let mut b = a.clone();
    b.transform_positions(|p| p * 0.9 + Vec3::new(0.05, 0.0, 0.02));
    let r = 96;
    let base = volume_iou(&a, &b, r).unwrap();
    let rot = Mat3::rotation(Vec3::new(0.2, 1.0, 0.3).normalized(), 0.7);
    let (mut ra, mut rb) = (a.clone(), b.clone());
    ra.transform_positions(|p| rot.mul_vec(p));
    rb.transform_positions(|p| rot.mul_vec(p));
    let turned = volume_iou(&ra, &rb, r).unwrap();
    // One voxel layer over the torus surface, relative to its volume.
    let area = 4.0 * std::f64::consts::PI.powi(2) * 0.7 * 0.3;
    let volume = 2.0 * std::f64::consts::PI.powi(2) * 0.7 * 0.09;
    let layer = area * (2.2 / r as f64) / volume;
    assert!((base - turned).abs() < layer, "{base} vs {turned}");
}

#[test]
fn chamfer_sample_count_within_standard_error() {
    let a = asymmetric_blob();
    let b = icosphere(3, 1.05);
    let n = 2000;
    let runs = |n: usize| -> Vec<f64> {
        (0..8)
            .map(|s| chamfer_distance(&a, &b, n, 100 + s).unwrap())
            .collect()
    };
    let small = runs(n);
    let mean = small.iter().sum::<f64>() / small.len() as f64;
    let var = small.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (small.len() - 1) as f64;
    let stderr = var.sqrt();
    let doubled = chamfer_distance(&a, &b, 2 * n, 7).unwrap();
    assert!(
        (doubled - mean).abs() <= 3.0 * stderr,
        "{doubled} vs {mean} ± {stderr}"
    );
}

#[test]
fn reparametrization_keeps_the_minimizer() {
    // f(x) = ½‖x − b‖² has its unique stationary point at x = b in either
    // parametrization because I + λL is nonsingular.
    let mesh = icosphere(2, 1.0);
    let goal: Vec<Vec3> = mesh
        .positions()
        .iter()
        .map(|p| *p * 1.2 + Vec3::new(0.1, 0.0, -0.05))
        .collect();
    for lambda in [0.0, 19.0] {
        let params = AdamParams {
            lambda,
            alpha: 1e-3,
            ..AdamParams::default()
        };
        let mut state = OptimizerState::new(&mesh, params).unwrap();
        let mut x = state.positions().unwrap();
        for _ in 0..8000 {
            let g: Vec<Vec3> = x.iter().zip(&goal).map(|(p, q)| *p - *q).collect();
            x = state.step(&g).unwrap();
        }
        let worst = x
            .iter()
            .zip(&goal)
            .map(|(p, q)| (*p - *q).norm())
            .fold(0.0, f64::max);
        assert!(worst < 5e-3, "lambda {lambda}: residual {worst}");
    }
}
