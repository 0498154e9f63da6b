//! Multi-view reconstruction objective and the reparametrized Adam loop.
//!
//! The objective is
//! `Φ(R(x)) + w1·tr(xᵀ B x) + w2·Σ_k min(0, det J_k)²`
//! with `Φ` the per-view l1 image loss, `B = LᵀL` the uniform bi-Laplacian
//! and `J_k` the 2×2 map from face `k`'s reference edge matrix to its current
//! one, both expressed in the reference tangent frame.
//!
//! Positions are never updated directly: Adam runs on latent coordinates
//! `u = (I + λ L_g) x` with `L_g` the graph Laplacian, and `x` is recovered by
//! a cached Cholesky solve.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::curvature::{
    combinatorial_laplacian, uniform_bilaplacian, CurvatureError, CurvatureField,
};
use crate::geometry::Vec3;
use crate::mesh::{HalfEdgeMesh, MeshError};
use crate::remesh::{
    remesh_event, MutationReport, RemeshError, RemeshMode, RemeshParams, RemeshSchedule,
};
use crate::render::{
    l1_view_loss, render, render_backward, Camera, RenderError, RenderParams, RenderedView,
};
use crate::sparse::{CsrMatrix, EnvelopeCholesky, SolveError};

/// Reference frames with `|det| ≤ this` are rejected.
pub const MIN_FRAME_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("positions have {got} entries but the mesh has {expected} vertices")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("reference frames were captured for a different connectivity")]
    StaleFrames,
    #[error("face {0} has a degenerate reference frame")]
    DegenerateFrame(usize),
    #[error("genus changed from {before:?} to {after:?}")]
    GenusChanged {
        before: Option<u32>,
        after: Option<u32>,
    },
    #[error("target mismatch: {0}")]
    TargetMismatch(&'static str),
    #[error("linear solve failed: {0}")]
    SolveFailure(#[from] SolveError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Remesh(#[from] RemeshError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Per-face reference data: unit normal and doubled area at capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrames {
    triangles: Vec<[usize; 3]>,
    normal: Vec<Vec3>,
    area2: Vec<f64>,
    num_vertices: usize,
}

impl ReferenceFrames {
    pub fn capture(mesh: &HalfEdgeMesh) -> Result<Self, OptimizeError> {
        let mut triangles = Vec::with_capacity(mesh.num_faces());
        let mut normal = Vec::with_capacity(mesh.num_faces());
        let mut area2 = Vec::with_capacity(mesh.num_faces());
        for f in mesh.face_ids() {
            let c = mesh.face_area_normal(f);
            let a = c.norm();
            if !(a > MIN_FRAME_AREA) {
                return Err(OptimizeError::DegenerateFrame(f));
            }
            triangles.push(mesh.face_vertices(f));
            normal.push(c / a);
            area2.push(a);
        }
        Ok(ReferenceFrames {
            triangles,
            normal,
            area2,
            num_vertices: mesh.vertex_capacity(),
        })
    }

    pub fn num_faces(&self) -> usize {
        self.triangles.len()
    }

    fn check(&self, mesh: &HalfEdgeMesh, x: &[Vec3]) -> Result<(), OptimizeError> {
        if x.len() != self.num_vertices || mesh.vertex_capacity() != self.num_vertices {
            return Err(OptimizeError::ShapeMismatch {
                expected: self.num_vertices,
                got: x.len(),
            });
        }
        if mesh.num_faces() != self.triangles.len()
            || mesh
                .face_ids()
                .zip(&self.triangles)
                .any(|(f, t)| mesh.face_vertices(f) != *t)
        {
            return Err(OptimizeError::StaleFrames);
        }
        Ok(())
    }

    /// `det J_k` for face `k` at positions `x`.
    pub fn jacobian_det(&self, k: usize, x: &[Vec3]) -> f64 {
        let [a, b, c] = self.triangles[k].map(|v| x[v]);
        self.normal[k].dot((b - a).cross(c - a)) / self.area2[k]
    }
}

/// Loss terms and the gradient of their weighted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub render: f64,
    /// Unweighted `tr(xᵀ B x)`.
    pub smooth: f64,
    /// Unweighted `Σ min(0, det J)²`.
    pub invert: f64,
    pub total: f64,
    pub grad: Vec<Vec3>,
    /// Faces with `det J ≤ 0`.
    pub inverted_faces: usize,
}

/// Everything the objective needs besides positions.
#[derive(Debug, Clone)]
pub struct Objective {
    pub cameras: Vec<Camera>,
    pub targets: Vec<RenderedView>,
    pub render: RenderParams,
    pub w1: f64,
    pub w2: f64,
    frames: ReferenceFrames,
    bilaplacian: CsrMatrix,
}

impl Objective {
    pub fn new(
        mesh: &HalfEdgeMesh,
        cameras: Vec<Camera>,
        targets: Vec<RenderedView>,
        render: RenderParams,
        w1: f64,
        w2: f64,
    ) -> Result<Self, OptimizeError> {
        if cameras.len() != targets.len() {
            return Err(OptimizeError::TargetMismatch(
                "view count differs from camera count",
            ));
        }
        for (cam, t) in cameras.iter().zip(&targets) {
            if cam.width != t.width
                || cam.height != t.height
                || t.coverage.len() != cam.pixel_count()
            {
                return Err(OptimizeError::TargetMismatch(
                    "target resolution differs from camera",
                ));
            }
        }
        if !(w1 >= 0.0 && w2 >= 0.0) {
            return Err(OptimizeError::TargetMismatch(
                "weights must be non-negative",
            ));
        }
        Ok(Objective {
            cameras,
            targets,
            render,
            w1,
            w2,
            frames: ReferenceFrames::capture(mesh)?,
            bilaplacian: uniform_bilaplacian(mesh),
        })
    }

    /// Recaptures reference frames and the bi-Laplacian after a connectivity change.
    pub fn refresh(&mut self, mesh: &HalfEdgeMesh) -> Result<(), OptimizeError> {
        self.frames = ReferenceFrames::capture(mesh)?;
        self.bilaplacian = uniform_bilaplacian(mesh);
        Ok(())
    }

    pub fn frames(&self) -> &ReferenceFrames {
        &self.frames
    }

    pub fn bilaplacian(&self) -> &CsrMatrix {
        &self.bilaplacian
    }
}

/// `tr(xᵀ B x)` and its gradient `2 B x`.
pub fn smoothness_term(x: &[Vec3], b: &CsrMatrix) -> (f64, Vec<Vec3>) {
    let bx = b.mul_vec3(x);
    let value = x.iter().zip(&bx).map(|(p, q)| p.dot(*q)).sum();
    (value, bx.into_iter().map(|v| v * 2.0).collect())
}

/// `Σ_k min(0, det J_k)²`, its gradient and the number of faces with `det ≤ 0`.
pub fn inversion_penalty(x: &[Vec3], frames: &ReferenceFrames) -> (f64, Vec<Vec3>, usize) {
    let mut value = 0.0;
    let mut grad = vec![Vec3::ZERO; x.len()];
    let mut inverted = 0;
    for k in 0..frames.num_faces() {
        let det = frames.jacobian_det(k, x);
        if det <= 0.0 {
            inverted += 1;
        }
        if det >= 0.0 {
            continue;
        }
        value += det * det;
        let [ia, ib, ic] = frames.triangles[k];
        let (a, b, c) = (x[ia], x[ib], x[ic]);
        let m = frames.normal[k] / frames.area2[k];
        let s = 2.0 * det;
        let gb = (c - a).cross(m) * s;
        let gc = m.cross(b - a) * s;
        grad[ib] += gb;
        grad[ic] += gc;
        grad[ia] -= gb + gc;
    }
    (value, grad, inverted)
}

/// Rendering loss summed over views, with its gradient. Views are reduced in
/// camera order, so the result does not depend on scheduling.
pub fn render_loss_and_grad(
    mesh: &HalfEdgeMesh,
    objective: &Objective,
) -> Result<(f64, Vec<Vec3>), OptimizeError> {
    let per_view = |i: usize| -> Result<(f64, Vec<Vec3>), OptimizeError> {
        let cam = &objective.cameras[i];
        let view = render(mesh, cam, i, &objective.render)?;
        let (loss, adj) = l1_view_loss(&view, &objective.targets[i])?;
        let g = render_backward(mesh, cam, &view, &adj, &objective.render)?;
        Ok((loss, g.grad))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(f64, Vec<Vec3>), OptimizeError>> = {
        use rayon::prelude::*;
        (0..objective.cameras.len())
            .into_par_iter()
            .map(per_view)
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(f64, Vec<Vec3>), OptimizeError>> =
        (0..objective.cameras.len()).map(per_view).collect();

    let mut loss = 0.0;
    let mut grad = vec![Vec3::ZERO; mesh.vertex_capacity()];
    for r in results {
        let (l, g) = r?;
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    Ok((loss, grad))
}

/// Full objective at the mesh's current positions.
pub fn objective_value_and_grad(
    mesh: &HalfEdgeMesh,
    objective: &Objective,
) -> Result<ObjectiveValue, OptimizeError> {
    let x = mesh.positions();
    objective.frames.check(mesh, x)?;
    let (render_loss, mut grad) = render_loss_and_grad(mesh, objective)?;
    let (smooth, gs) = smoothness_term(x, &objective.bilaplacian);
    let (invert, gi, inverted_faces) = inversion_penalty(x, &objective.frames);
    for ((g, s), i) in grad.iter_mut().zip(&gs).zip(&gi) {
        *g += *s * objective.w1 + *i * objective.w2;
    }
    Ok(ObjectiveValue {
        render: render_loss,
        smooth,
        invert,
        total: render_loss + objective.w1 * smooth + objective.w2 * invert,
        grad,
        inverted_faces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Reparametrization weight λ.
    pub lambda: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            alpha: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda: 19.0,
        }
    }
}

/// Adam on latent coordinates `u = (I + λ L_g) x`.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub params: AdamParams,
    pub u: Vec<Vec3>,
    pub m: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub iteration: usize,
    system: CsrMatrix,
    factor: EnvelopeCholesky,
}

impl OptimizerState {
    /// Fresh state (zero moments) for the mesh's current positions.
    pub fn new(mesh: &HalfEdgeMesh, params: AdamParams) -> Result<Self, OptimizeError> {
        if !(params.lambda >= 0.0) {
            return Err(OptimizeError::TargetMismatch("lambda must be non-negative"));
        }
        let system = combinatorial_laplacian(mesh).scaled_plus_identity(params.lambda, 1.0);
        let factor = EnvelopeCholesky::factor(&system)?;
        let u = system.mul_vec3(mesh.positions());
        let n = u.len();
        Ok(OptimizerState {
            params,
            u,
            m: vec![Vec3::ZERO; n],
            v: vec![Vec3::ZERO; n],
            iteration: 0,
            system,
            factor,
        })
    }

    /// `x = (I + λ L_g)⁻¹ u`.
    pub fn positions(&self) -> Result<Vec<Vec3>, OptimizeError> {
        Ok(self.factor.solve_vec3(&self.u)?)
    }

    pub fn system(&self) -> &CsrMatrix {
        &self.system
    }

    /// Pulls `grad_x` back to `u` (the system is symmetric) and applies one
    /// bias-corrected Adam update; returns the new positions.
    pub fn step(&mut self, grad_x: &[Vec3]) -> Result<Vec<Vec3>, OptimizeError> {
        if grad_x.len() != self.u.len() {
            return Err(OptimizeError::ShapeMismatch {
                expected: self.u.len(),
                got: grad_x.len(),
            });
        }
        let gu = self.factor.solve_vec3(grad_x)?;
        let AdamParams {
            alpha,
            beta1,
            beta2,
            epsilon,
            ..
        } = self.params;
        self.iteration += 1;
        let t = self.iteration as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..self.u.len() {
            for k in 0..3 {
                let g = gu[i][k];
                let m = beta1 * self.m[i][k] + (1.0 - beta1) * g;
                let v = beta2 * self.v[i][k] + (1.0 - beta2) * g * g;
                self.m[i][k] = m;
                self.v[i][k] = v;
                self.u[i][k] -= alpha * (m / c1) / ((v / c2).sqrt() + epsilon);
            }
        }
        self.positions()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructParams {
    pub iterations: usize,
    pub adam: AdamParams,
    pub w1: f64,
    pub w2: f64,
    pub render: RenderParams,
    pub remesh: RemeshParams,
    pub remesh_enabled: bool,
    /// Stop when the best loss improved by less than this fraction over the
    /// last `plateau_window` iterations; a window of 0 disables the check.
    pub plateau_tolerance: f64,
    pub plateau_window: usize,
    pub seed: u64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        ReconstructParams {
            iterations: 1500,
            adam: AdamParams::default(),
            w1: 1e-4,
            w2: 1e2,
            render: RenderParams::default(),
            remesh: RemeshParams::default(),
            remesh_enabled: true,
            plateau_tolerance: 1e-5,
            plateau_window: 100,
            seed: 0,
        }
    }
}

/// One row of the run report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub iter: usize,
    pub loss_render: f64,
    /// Weighted smoothness term.
    pub loss_smooth: f64,
    /// Weighted inversion penalty.
    pub loss_invert: f64,
    pub num_vertices: usize,
    pub genus: Option<u32>,
    pub inverted_faces: usize,
}

impl ReportRow {
    pub fn total(&self) -> f64 {
        self.loss_render + self.loss_smooth + self.loss_invert
    }
}

/// A remesh event as it happened during reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct RemeshRecord {
    pub iter: usize,
    pub mode: RemeshMode,
    pub report: MutationReport,
    pub num_vertices: usize,
}

/// Progress hooks; every method defaults to doing nothing.
pub trait Observer {
    fn on_iteration(&mut self, _row: &ReportRow, _mesh: &HalfEdgeMesh) {}
    fn on_remesh(&mut self, _record: &RemeshRecord, _mesh: &HalfEdgeMesh) {}
}

pub struct NoopObserver;

impl Observer for NoopObserver {}

#[derive(Debug, Clone)]
pub struct ReconstructOutcome {
    pub mesh: HalfEdgeMesh,
    /// One row per optimizer iteration plus a final row for the output mesh.
    pub history: Vec<ReportRow>,
    pub remesh_events: Vec<RemeshRecord>,
    pub stopped_on_plateau: bool,
}

fn row(
    iter: usize,
    value: &ObjectiveValue,
    objective: &Objective,
    mesh: &HalfEdgeMesh,
) -> ReportRow {
    ReportRow {
        iter,
        loss_render: value.render,
        loss_smooth: objective.w1 * value.smooth,
        loss_invert: objective.w2 * value.invert,
        num_vertices: mesh.num_vertices(),
        genus: mesh.topology_summary().genus,
        inverted_faces: value.inverted_faces,
    }
}

/// Optimizes `init` towards the target views.
pub fn reconstruct(
    init: &HalfEdgeMesh,
    cameras: Vec<Camera>,
    targets: Vec<RenderedView>,
    params: &ReconstructParams,
    observer: &mut dyn Observer,
) -> Result<ReconstructOutcome, OptimizeError> {
    let mut mesh = init.compacted()?;
    let genus = mesh.topology_summary().genus;
    let mut objective =
        Objective::new(&mesh, cameras, targets, params.render, params.w1, params.w2)?;
    let mut state = OptimizerState::new(&mesh, params.adam)?;
    let mut schedule = RemeshSchedule::new(params.remesh.period, params.seed);
    if params.remesh_enabled {
        params.remesh.validate()?;
    }
    let mut history = Vec::with_capacity(params.iterations + 1);
    let mut remesh_events = Vec::new();
    let mut epoch_start = 0usize;
    let mut stopped_on_plateau = false;

    for it in 0..params.iterations {
        // Events too close to the end of the budget are skipped so the final
        // mesh is always optimized for at least one minimum period.
        if params.remesh_enabled && it > 0 && it + params.remesh.period.0 <= params.iterations {
            if let Some(mode) = schedule.poll(it) {
                let curvature = CurvatureField::compute(&mesh)?;
                let outcome = remesh_event(&mesh, &curvature, &params.remesh, mode)?;
                let after = outcome.mesh.topology_summary().genus;
                if after != genus {
                    return Err(OptimizeError::GenusChanged {
                        before: genus,
                        after,
                    });
                }
                mesh = outcome.mesh;
                objective.refresh(&mesh)?;
                state = OptimizerState::new(&mesh, params.adam)?;
                let record = RemeshRecord {
                    iter: it,
                    mode,
                    report: outcome.report,
                    num_vertices: mesh.num_vertices(),
                };
                observer.on_remesh(&record, &mesh);
                remesh_events.push(record);
                epoch_start = history.len();
            }
        }

        let value = objective_value_and_grad(&mesh, &objective)?;
        let r = row(it, &value, &objective, &mesh);
        observer.on_iteration(&r, &mesh);
        history.push(r);

        if params.plateau_window > 0 && history.len() - epoch_start > params.plateau_window {
            let split = history.len() - params.plateau_window;
            let best = |rows: &[ReportRow]| {
                rows.iter()
                    .map(ReportRow::total)
                    .fold(f64::INFINITY, f64::min)
            };
            let before = best(&history[epoch_start..split]);
            let recent = best(&history[split..]);
            if before.is_finite() && (before - recent) < params.plateau_tolerance * before.abs() {
                stopped_on_plateau = true;
                break;
            }
        }

        let x = state.step(&value.grad)?;
        mesh.set_positions(&x);
        #[cfg(feature = "invariant-checks")]
        if mesh.is_closed() {
            crate::invariants::assert_pipeline_mesh(&mesh, "optimizer step");
        }
    }

    let value = objective_value_and_grad(&mesh, &objective)?;
    let final_iter = history.last().map_or(0, |r| r.iter + 1);
    let r = row(final_iter, &value, &objective, &mesh);
    observer.on_iteration(&r, &mesh);
    history.push(r);
    if mesh.topology_summary().genus != genus {
        return Err(OptimizeError::GenusChanged {
            before: genus,
            after: mesh.topology_summary().genus,
        });
    }
    #[cfg(feature = "invariant-checks")]
    if mesh.is_closed() {
        crate::invariants::assert_pipeline_mesh(&mesh, "reconstruct");
    }
    Ok(ReconstructOutcome {
        mesh,
        history,
        remesh_events,
        stopped_on_plateau,
    })
}

/// Renders every camera, e.g. to produce targets from a ground-truth mesh.
pub fn render_views(
    mesh: &HalfEdgeMesh,
    cameras: &[Camera],
    params: &RenderParams,
) -> Result<Vec<RenderedView>, RenderError> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, c)| render(mesh, c, i, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{grid_torus, icosphere};
    use crate::render::{make_camera_rig, DEFAULT_FOV_Y};

    #[test]
    fn congruent_face_has_unit_det_and_mirror_minus_one() {
        let h = 3.0f64.sqrt() / 2.0;
        let p = vec![
            Vec3::ZERO,
            Vec3::X,
            Vec3::new(0.5, h, 0.0),
            Vec3::new(0.5, 0.3, 1.0),
        ];
        let mesh = HalfEdgeMesh::build(&[[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]], p).unwrap();
        let frames = ReferenceFrames::capture(&mesh).unwrap();
        let shift = Vec3::new(0.2, -1.0, 0.4);
        let x: Vec<Vec3> = mesh.positions().iter().map(|&q| q + shift).collect();
        assert!((frames.jacobian_det(0, &x) - 1.0).abs() < 1e-12);
        let (pen, _, bad) = inversion_penalty(&x, &frames);
        assert_eq!((pen, bad), (0.0, 0));

        // Swapping two corners mirrors the equilateral face onto itself.
        let mut y = x.clone();
        y.swap(0, 1);
        assert!((frames.jacobian_det(0, &y) + 1.0).abs() < 1e-12);
        let only_first = ReferenceFrames {
            triangles: vec![frames.triangles[0]],
            normal: vec![frames.normal[0]],
            area2: vec![frames.area2[0]],
            num_vertices: 4,
        };
        let (pen, _, bad) = inversion_penalty(&y, &only_first);
        assert!((pen - 1.0).abs() < 1e-12);
        assert_eq!(bad, 1);
    }

    #[test]
    fn penalty_gradient_matches_finite_difference() {
        let mesh = icosphere(1, 1.0);
        let frames = ReferenceFrames::capture(&mesh).unwrap();
        let mut x = mesh.positions().to_vec();
        // Drag one vertex across its neighbour so some of its faces fold over.
        let ring: Vec<Vec3> = mesh.outgoing(0).map(|h| x[mesh.dest(h)]).collect();
        let centre = ring.iter().copied().sum::<Vec3>() / ring.len() as f64;
        x[0] = ring[0] + (ring[0] - centre) * 0.5;
        let (_, g, bad) = inversion_penalty(&x, &frames);
        assert!(bad > 0);
        let delta = 1e-6;
        for v in 0..x.len() {
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[v][k] += delta;
                xm[v][k] -= delta;
                let fd = (inversion_penalty(&xp, &frames).0 - inversion_penalty(&xm, &frames).0)
                    / (2.0 * delta);
                assert!(
                    (fd - g[v][k]).abs() <= 1e-6 * (1.0 + g[v][k].abs()),
                    "{v} {k}: {fd} vs {}",
                    g[v][k]
                );
            }
        }
    }

    #[test]
    fn smoothness_constant_zero_and_quadratic() {
        let mesh = icosphere(2, 1.0);
        let b = uniform_bilaplacian(&mesh);
        let c = vec![Vec3::new(0.3, -1.0, 2.0); mesh.num_vertices()];
        assert!(smoothness_term(&c, &b).0.abs() < 1e-10);
        let x = mesh.positions().to_vec();
        let (v1, _) = smoothness_term(&x, &b);
        let x3: Vec<Vec3> = x.iter().map(|p| *p * 3.0).collect();
        let (v3, _) = smoothness_term(&x3, &b);
        assert!(v1 > 0.0);
        assert!((v3 - 9.0 * v1).abs() < 1e-12 * v3);
    }

    #[test]
    fn lambda_zero_is_vanilla_adam() {
        let mesh = icosphere(1, 1.0);
        let params = AdamParams {
            lambda: 0.0,
            ..AdamParams::default()
        };
        let mut s = OptimizerState::new(&mesh, params).unwrap();
        let g: Vec<Vec3> = (0..mesh.num_vertices())
            .map(|i| Vec3::new(i as f64, -1.0, 0.0))
            .collect();
        let x = s.step(&g).unwrap();
        for (i, (p, q)) in mesh.positions().iter().zip(&x).enumerate() {
            // First bias-corrected Adam step moves by α·sign(g).
            let expect = *p - Vec3::new(if i == 0 { 0.0 } else { 1e-2 }, -1e-2, 0.0);
            assert!((*q - expect).norm() < 1e-9, "{i}");
        }
    }

    #[test]
    fn zero_gradient_keeps_positions() {
        let mesh = icosphere(2, 1.0);
        let mut s = OptimizerState::new(&mesh, AdamParams::default()).unwrap();
        let x = s.step(&vec![Vec3::ZERO; mesh.num_vertices()]).unwrap();
        for (p, q) in mesh.positions().iter().zip(&x) {
            assert!((*p - *q).norm() < 1e-12);
        }
    }

    #[test]
    fn self_targets_give_zero_loss_and_gradient() {
        let mesh = grid_torus(24, 12, 0.7, 0.3);
        let cams = make_camera_rig(4, 2.5, 24, 24, DEFAULT_FOV_Y);
        let targets = render_views(&mesh, &cams, &RenderParams::default()).unwrap();
        let obj = Objective::new(&mesh, cams, targets, RenderParams::default(), 0.0, 0.0).unwrap();
        let v = objective_value_and_grad(&mesh, &obj).unwrap();
        assert_eq!(v.total, 0.0);
        assert!(v.grad.iter().all(|g| *g == Vec3::ZERO));
    }

    #[test]
    fn stale_frames_detected() {
        let mesh = icosphere(1, 1.0);
        let cams = make_camera_rig(1, 2.5, 8, 8, DEFAULT_FOV_Y);
        let targets = render_views(&mesh, &cams, &RenderParams::default()).unwrap();
        let obj = Objective::new(&mesh, cams, targets, RenderParams::default(), 1e-4, 1e2).unwrap();
        let mut other = mesh.clone();
        let h = other.edge_ids().next().unwrap();
        other.flip_edge(h);
        assert_eq!(
            objective_value_and_grad(&other, &obj).unwrap_err(),
            OptimizeError::StaleFrames
        );
    }

    #[test]
    fn zero_iterations_return_init() {
        let mesh = grid_torus(24, 8, 0.75, 0.25);
        let cams = make_camera_rig(2, 2.5, 16, 16, DEFAULT_FOV_Y);
        let targets = render_views(&mesh, &cams, &RenderParams::default()).unwrap();
        let params = ReconstructParams {
            iterations: 0,
            ..ReconstructParams::default()
        };
        let out = reconstruct(&mesh, cams, targets, &params, &mut NoopObserver).unwrap();
        assert_eq!(out.mesh.positions(), mesh.positions());
        assert_eq!(out.history.len(), 1);
    }
}
