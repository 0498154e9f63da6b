//! Reconstruction metrics: rigid ICP alignment, point-to-surface Chamfer
//! distance and voxelized volume IoU.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{closest_point_on_triangle, Mat3, RigidTransform, Vec3};
use crate::mesh::HalfEdgeMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("volume IoU needs closed meshes")]
    NotClosed,
    #[error("mesh has no faces")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: `start..start + count` in `order`; inner: children `start`, `start + 1`.
    start: usize,
    count: usize,
}

/// Bounding-volume hierarchy over a triangle soup for closest-point queries.
#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn box_distance2(p: Vec3, lo: Vec3, hi: Vec3) -> f64 {
    let d = (lo - p).max(Vec3::ZERO).max(p - hi);
    d.norm_squared()
}

impl Bvh {
    pub fn new(mesh: &HalfEdgeMesh) -> Result<Self, MetricsError> {
        let triangles: Vec<[Vec3; 3]> = mesh.face_ids().map(|f| mesh.face_positions(f)).collect();
        if triangles.is_empty() {
            return Err(MetricsError::Empty);
        }
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        let mut bvh = Bvh {
            order: (0..triangles.len()).collect(),
            triangles,
            nodes: Vec::new(),
        };
        bvh.nodes.push(Node {
            lo: Vec3::ZERO,
            hi: Vec3::ZERO,
            start: 0,
            count: 0,
        });
        let n = bvh.triangles.len();
        bvh.build(0, 0, n, &centroids);
        Ok(bvh)
    }

    fn build(&mut self, node: usize, start: usize, end: usize, centroids: &[Vec3]) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        let mut clo = lo;
        let mut chi = hi;
        for &t in &self.order[start..end] {
            for p in self.triangles[t] {
                lo = lo.min(p);
                hi = hi.max(p);
            }
            clo = clo.min(centroids[t]);
            chi = chi.max(centroids[t]);
        }
        self.nodes[node].lo = lo;
        self.nodes[node].hi = hi;
        if end - start <= LEAF_SIZE {
            self.nodes[node].start = start;
            self.nodes[node].count = end - start;
            return;
        }
        let ext = chi - clo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a][axis]
                .partial_cmp(&centroids[b][axis])
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        let blank = Node {
            lo,
            hi,
            start: 0,
            count: 0,
        };
        self.nodes.push(blank);
        self.nodes.push(blank);
        self.nodes[node].start = left;
        self.nodes[node].count = 0;
        self.build(left, start, mid, centroids);
        self.build(left + 1, mid, end, centroids);
    }

    /// Closest surface point to `p` and its squared distance.
    pub fn closest_point(&self, p: Vec3) -> (Vec3, f64) {
        let mut best = (Vec3::ZERO, f64::INFINITY);
        let mut stack: Vec<usize> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = self.nodes[ni];
            if box_distance2(p, node.lo, node.hi) >= best.1 {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = self.triangles[t];
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d = (q - p).norm_squared();
                    if d < best.1 {
                        best = (q, d);
                    }
                }
            } else {
                let (l, r) = (node.start, node.start + 1);
                let dl = box_distance2(p, self.nodes[l].lo, self.nodes[l].hi);
                let dr = box_distance2(p, self.nodes[r].lo, self.nodes[r].hi);
                // Visit the nearer child first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        self.closest_point(p).1.sqrt()
    }
}

/// `n` points distributed uniformly by area over the surface.
pub fn sample_surface(mesh: &HalfEdgeMesh, n: usize, seed: u64) -> Result<Vec<Vec3>, MetricsError> {
    let faces: Vec<[Vec3; 3]> = mesh.face_ids().map(|f| mesh.face_positions(f)).collect();
    if faces.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cdf = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for [a, b, c] in &faces {
        total += (*b - *a).cross(*c - *a).norm();
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(MetricsError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= r).min(faces.len() - 1);
            let [a, b, c] = faces[k];
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let su = u.sqrt();
            a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v)
        })
        .collect())
}

/// Centres the bounding box at the origin and scales the farthest vertex to distance 1.
pub fn normalize_unit(mesh: &HalfEdgeMesh) -> HalfEdgeMesh {
    let (lo, hi) = mesh.bounding_box();
    let centre = (lo + hi) * 0.5;
    let radius = mesh
        .vertex_ids()
        .map(|v| mesh.position(v).distance(centre))
        .fold(0.0, f64::max);
    let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };
    let mut out = mesh.clone();
    out.transform_positions(|p| (p - centre) * scale);
    out
}

/// Symmetric mean point-to-surface distance from `n` area-weighted samples
/// on each side. Both meshes are sampled with the same seed, which makes the
/// result exactly symmetric in its arguments.
pub fn chamfer_distance(
    a: &HalfEdgeMesh,
    b: &HalfEdgeMesh,
    n: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidParams("need at least one sample"));
    }
    let (bvh_a, bvh_b) = (Bvh::new(a)?, Bvh::new(b)?);
    let sa = sample_surface(a, n, seed)?;
    let sb = sample_surface(b, n, seed)?;
    Ok(0.5 * (mean_distance(&sa, &bvh_b) + mean_distance(&sb, &bvh_a)))
}

fn mean_distance(points: &[Vec3], bvh: &Bvh) -> f64 {
    #[cfg(feature = "parallel")]
    let d: Vec<f64> = {
        use rayon::prelude::*;
        points.par_iter().map(|&p| bvh.distance(p)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let d: Vec<f64> = points.iter().map(|&p| bvh.distance(p)).collect();
    d.iter().sum::<f64>() / points.len() as f64
}

/// Eigenvector of the largest eigenvalue of a symmetric 4×4 matrix (cyclic Jacobi).
fn dominant_eigenvector(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..3 {
            for q in p + 1..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let best = (0..4).fold(0, |b, i| if a[i][i] > a[b][b] { i } else { b });
    [v[0][best], v[1][best], v[2][best], v[3][best]]
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Horn's
/// unit-quaternion method).
pub fn fit_rigid(src: &[Vec3], dst: &[Vec3]) -> RigidTransform {
    let n = src.len().min(dst.len());
    if n == 0 {
        return RigidTransform::IDENTITY;
    }
    let cs = src[..n].iter().copied().sum::<Vec3>() / n as f64;
    let cd = dst[..n].iter().copied().sum::<Vec3>() / n as f64;
    let mut s = [[0.0; 3]; 3];
    for i in 0..n {
        let (p, q) = (src[i] - cs, dst[i] - cd);
        for (r, row) in s.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e += p[r] * q[c];
            }
        }
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let m = [
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ];
    let [w, x, y, z] = dominant_eigenvector(m);
    let norm = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / norm, x / norm, y / norm, z / norm);
    let rotation = Mat3::from_rows(
        Vec3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ),
        Vec3::new(
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ),
        Vec3::new(
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ),
    );
    RigidTransform {
        rotation,
        translation: cd - rotation.mul_vec(cs),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the source onto the target.
    pub transform: RigidTransform,
    /// Mean squared closest-point distance before each update, then at the end.
    pub errors: Vec<f64>,
}

/// Point-to-point ICP of `samples` source surface samples against the
/// target surface, starting from the identity.
pub fn icp_align(
    source: &HalfEdgeMesh,
    target: &HalfEdgeMesh,
    max_iters: usize,
    samples: usize,
    seed: u64,
) -> Result<IcpResult, MetricsError> {
    let pts = sample_surface(source, samples.max(1), seed)?;
    let bvh = Bvh::new(target)?;
    let mut transform = RigidTransform::IDENTITY;
    let mut errors = Vec::new();
    let mut moved = pts.clone();
    let mut matches = vec![Vec3::ZERO; pts.len()];
    for _ in 0..=max_iters {
        let mut err = 0.0;
        for (m, p) in matches.iter_mut().zip(&moved) {
            let (q, d) = bvh.closest_point(*p);
            *m = q;
            err += d;
        }
        err /= pts.len() as f64;
        let converged = errors
            .last()
            .is_some_and(|&prev: &f64| prev - err <= 1e-14 * prev.max(1e-300));
        errors.push(err);
        if converged || errors.len() > max_iters || err == 0.0 {
            break;
        }
        transform = fit_rigid(&pts, &matches);
        for (m, p) in moved.iter_mut().zip(&pts) {
            *m = transform.apply(*p);
        }
    }
    Ok(IcpResult { transform, errors })
}

/// Occupancy of voxel centres for an `r³` grid over `[lo, hi]`, by z-parity.
fn voxelize(mesh: &HalfEdgeMesh, lo: Vec3, hi: Vec3, r: usize) -> Vec<bool> {
    let step = (hi - lo) / r as f64;
    let centre = |i: usize, axis: usize| lo[axis] + (i as f64 + 0.5) * step[axis];
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); r * r];
    let tris: Vec<[usize; 3]> = mesh.face_ids().map(|f| mesh.face_vertices(f)).collect();
    let cell =
        |v: f64, axis: usize| -> isize { ((v - lo[axis]) / step[axis] - 0.5).floor() as isize };
    for (t, tri) in tris.iter().enumerate() {
        let p = tri.map(|v| mesh.position(v));
        let (x0, x1) = (
            p[0].x.min(p[1].x).min(p[2].x),
            p[0].x.max(p[1].x).max(p[2].x),
        );
        let (y0, y1) = (
            p[0].y.min(p[1].y).min(p[2].y),
            p[0].y.max(p[1].y).max(p[2].y),
        );
        let i0 = (cell(x0, 0) + 1).max(0) as usize;
        let i1 = cell(x1, 0).min(r as isize - 1);
        let j0 = (cell(y0, 1) + 1).max(0) as usize;
        let j1 = cell(y1, 1).min(r as isize - 1);
        if i1 < 0 || j1 < 0 {
            continue;
        }
        for j in j0..=j1 as usize {
            for i in i0..=i1 as usize {
                columns[j * r + i].push(t);
            }
        }
    }
    let mut occ = vec![false; r * r * r];
    let mut hits: Vec<f64> = Vec::new();
    for j in 0..r {
        let y = centre(j, 1);
        for i in 0..r {
            let x = centre(i, 0);
            hits.clear();
            for &t in &columns[j * r + i] {
                if let Some(z) = column_hit(mesh, tris[t], x, y) {
                    hits.push(z);
                }
            }
            if hits.is_empty() {
                continue;
            }
            hits.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            let mut below = 0;
            for k in 0..r {
                let z = centre(k, 2);
                while below < hits.len() && hits[below] < z {
                    below += 1;
                }
                occ[(k * r + j) * r + i] = below % 2 == 1;
            }
        }
    }
    occ
}

/// Height at which the vertical line through `(x, y)` crosses the triangle,
/// with a tie rule that counts shared edges exactly once per sheet.
fn column_hit(mesh: &HalfEdgeMesh, tri: [usize; 3], x: f64, y: f64) -> Option<f64> {
    let p = tri.map(|v| mesh.position(v));
    let area = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
    if area == 0.0 {
        return None;
    }
    let up = area > 0.0;
    let mut w = [0.0; 3];
    for k in 0..3 {
        let (i, j) = (tri[k], tri[(k + 1) % 3]);
        let forward = i < j;
        let (a, b) = if forward {
            (p[k], p[(k + 1) % 3])
        } else {
            (p[(k + 1) % 3], p[k])
        };
        let e = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        let directed = if forward { e } else { -e };
        let v = if up { directed } else { -directed };
        if v < 0.0 || (v == 0.0 && forward == !up) {
            return None;
        }
        w[(k + 2) % 3] = v;
    }
    let sum = w[0] + w[1] + w[2];
    if !(sum > 0.0) {
        return None;
    }
    Some((w[0] * p[0].z + w[1] * p[1].z + w[2] * p[2].z) / sum)
}

/// Voxel IoU of two closed meshes over their joint bounding box.
pub fn volume_iou(
    a: &HalfEdgeMesh,
    b: &HalfEdgeMesh,
    resolution: usize,
) -> Result<f64, MetricsError> {
    if !a.is_closed() || !b.is_closed() {
        return Err(MetricsError::NotClosed);
    }
    if resolution == 0 {
        return Err(MetricsError::InvalidParams("resolution must be positive"));
    }
    let (la, ha) = a.bounding_box();
    let (lb, hb) = b.bounding_box();
    let lo = la.min(lb);
    let hi = ha.max(hb);
    // Pad by half a voxel so surfaces never sit exactly on the outer centres.
    let pad = (hi - lo) * (0.5 / resolution as f64) + Vec3::splat(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);
    let oa = voxelize(a, lo, hi, resolution);
    let ob = voxelize(b, lo, hi, resolution);
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in oa.iter().zip(&ob) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub samples: usize,
    pub resolution: usize,
    pub icp_iterations: usize,
    pub icp_samples: usize,
    pub seed: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            samples: 100_000,
            resolution: 128,
            icp_iterations: 50,
            icp_samples: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub chamfer: f64,
    pub iou: f64,
    /// Applied to the normalized prediction to align it with the normalized reference.
    pub icp: RigidTransform,
    pub samples: usize,
    pub resolution: usize,
}

/// Normalizes both meshes to unit bounding radius, aligns `predicted` to
/// `reference` with ICP and measures Chamfer distance and volume IoU.
pub fn evaluate(
    predicted: &HalfEdgeMesh,
    reference: &HalfEdgeMesh,
    params: &EvalParams,
) -> Result<EvalReport, MetricsError> {
    let pred = normalize_unit(predicted);
    let refm = normalize_unit(reference);
    let icp = icp_align(
        &pred,
        &refm,
        params.icp_iterations,
        params.icp_samples,
        params.seed,
    )?;
    let mut aligned = pred;
    aligned.transform_positions(|p| icp.transform.apply(p));
    let chamfer = chamfer_distance(&aligned, &refm, params.samples, params.seed)?;
    let iou = volume_iou(&aligned, &refm, params.resolution)?;
    Ok(EvalReport {
        chamfer,
        iou,
        icp: icp.transform,
        samples: params.samples,
        resolution: params.resolution,
    })
}
