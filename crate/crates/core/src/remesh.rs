//! Curvature-adaptive incremental remeshing and the coarsen/refine schedule.
//!
//! One event runs `split → collapse → flip → smooth`, `passes` times, against
//! a per-vertex target edge length derived from the principal curvatures.
//! Every operation preserves topology: splits and flips trivially, collapses
//! through the link condition.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::curvature::{CurvatureError, CurvatureField};
use crate::geometry::Vec3;
use crate::mesh::{HalfEdgeMesh, MeshError};

/// Edges longer than this multiple of the target are split.
pub const SPLIT_RATIO: f64 = 4.0 / 3.0;
/// Edges shorter than this multiple of the target are collapsed.
pub const COLLAPSE_RATIO: f64 = 4.0 / 5.0;
/// Lower end of the "well sized" band used by quality reports.
pub const BAND_LOW: f64 = 0.8;
/// Upper end of the "well sized" band.
pub const BAND_HIGH: f64 = 4.0 / 3.0;

const MAX_SWEEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RemeshError {
    #[error("invalid remesh parameters: {0}")]
    InvalidParams(&'static str),
    #[error("remeshing produced an invalid mesh: {0}")]
    RemeshInternalError(MeshError),
    #[error("remeshing changed the Euler characteristic from {before} to {after}")]
    TopologyChanged { before: i64, after: i64 },
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemeshMode {
    /// Sizing field doubled: fewer, larger triangles.
    Coarsen,
    /// Sizing field used as computed.
    Refine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemeshParams {
    /// Allowed chordal deviation ε (length units).
    pub tolerance: f64,
    pub min_edge: f64,
    pub max_edge: f64,
    /// When positive, the upper clamp becomes `min(max_edge, factor · mean edge
    /// length)` at event time; this is what keeps flat regions uniformly sized.
    pub mean_edge_factor: f64,
    /// Curvatures at or below this are treated as flat.
    pub curvature_floor: f64,
    pub target_valence: usize,
    /// Tangential smoothing step μ ∈ (0, 1].
    pub smoothing: f64,
    pub passes: usize,
    /// Inclusive range of optimizer iterations between events.
    pub period: (usize, usize),
}

impl Default for RemeshParams {
    fn default() -> Self {
        RemeshParams {
            tolerance: 2e-3,
            min_edge: 0.02,
            max_edge: 0.15,
            mean_edge_factor: 1.5,
            curvature_floor: 1e-3,
            target_valence: 6,
            smoothing: 0.5,
            passes: 3,
            period: (130, 200),
        }
    }
}

impl RemeshParams {
    pub fn validate(&self) -> Result<(), RemeshError> {
        if !(self.min_edge > 0.0 && self.min_edge < self.max_edge) {
            return Err(RemeshError::InvalidParams("need 0 < min_edge < max_edge"));
        }
        if !(self.tolerance > 0.0) {
            return Err(RemeshError::InvalidParams("tolerance must be positive"));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(RemeshError::InvalidParams("smoothing must lie in (0, 1]"));
        }
        if self.period.0 == 0 || self.period.0 > self.period.1 {
            return Err(RemeshError::InvalidParams(
                "period range must satisfy 1 <= lo <= hi",
            ));
        }
        if self.curvature_floor < 0.0 {
            return Err(RemeshError::InvalidParams(
                "curvature floor must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Target edge length per vertex id.
#[derive(Debug, Clone, PartialEq)]
pub struct SizingField {
    pub target: Vec<f64>,
}

impl SizingField {
    pub fn uniform(n: usize, length: f64) -> Self {
        SizingField {
            target: vec![length; n],
        }
    }

    #[inline]
    fn edge_target(&self, mesh: &HalfEdgeMesh, h: usize) -> f64 {
        self.target[mesh.origin(h)].min(self.target[mesh.dest(h)])
    }
}

/// Counts of local operations performed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MutationReport {
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    pub smooth_passes: usize,
}

impl core::ops::AddAssign for MutationReport {
    fn add_assign(&mut self, o: Self) {
        self.splits += o.splits;
        self.collapses += o.collapses;
        self.flips += o.flips;
        self.smooth_passes += o.smooth_passes;
    }
}

/// Chordal-error edge length for curvature `kappa` and tolerance `eps`,
/// clamped to `[min_edge, max_edge]`.
pub fn target_length(kappa: f64, params: &RemeshParams) -> f64 {
    let eps = params.tolerance;
    let kappa = kappa.abs().max(params.curvature_floor);
    if kappa <= params.curvature_floor {
        return params.max_edge;
    }
    let sq = 6.0 * eps / kappa - 3.0 * eps * eps;
    let l = if sq > 0.0 { sq.sqrt() } else { 0.0 };
    l.clamp(params.min_edge, params.max_edge)
}

pub fn sizing_field(
    mesh: &HalfEdgeMesh,
    curvature: &CurvatureField,
    params: &RemeshParams,
) -> SizingField {
    let mut target = vec![params.max_edge; mesh.vertex_capacity()];
    for v in mesh.vertex_ids() {
        let kappa = curvature.k1[v].abs().max(curvature.k2[v].abs());
        target[v] = target_length(kappa, params);
    }
    SizingField { target }
}

/// Splits edges longer than `4/3 · min(L(i), L(j))` at their midpoint,
/// worst length-to-limit ratio first. Splitting the relatively longest edge
/// first is longest-edge bisection, which keeps angles and hence valences
/// bounded however deep the refinement goes. New vertices get the mean
/// target of their endpoints.
pub fn split_long_edges(mesh: &mut HalfEdgeMesh, sizing: &mut SizingField) -> MutationReport {
    let mut report = MutationReport::default();
    // Positive ratios order like their bit patterns; ties pop the lower id.
    let ratio = |mesh: &HalfEdgeMesh, sizing: &SizingField, h: usize| {
        mesh.edge_length(h) / (SPLIT_RATIO * sizing.edge_target(mesh, h))
    };
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<(u64, Reverse<usize>)>,
                mesh: &HalfEdgeMesh,
                sizing: &SizingField,
                h: usize| {
        let h = h.min(mesh.twin(h));
        let r = ratio(mesh, sizing, h);
        if r > 1.0 {
            heap.push((r.to_bits(), Reverse(h)));
        }
    };
    for h in mesh.edge_ids() {
        push(&mut heap, mesh, sizing, h);
    }
    while let Some((bits, Reverse(h))) = heap.pop() {
        // Entries go stale when a neighbouring split reuses or shortens the edge.
        if !mesh.is_halfedge_live(h) || ratio(mesh, sizing, h).to_bits() != bits {
            continue;
        }
        let (u, v) = (mesh.origin(h), mesh.dest(h));
        let mid = (mesh.position(u) + mesh.position(v)) * 0.5;
        let m = mesh.split_edge(h, mid);
        debug_assert_eq!(m, sizing.target.len());
        sizing
            .target
            .push(0.5 * (sizing.target[u] + sizing.target[v]));
        report.splits += 1;
        let around: Vec<usize> = mesh.outgoing(m).collect();
        for e in around {
            push(&mut heap, mesh, sizing, e);
        }
    }
    report
}

fn face_normal_with(mesh: &HalfEdgeMesh, f: usize, moved: &[usize], to: Vec3) -> Vec3 {
    let vs = mesh.face_vertices(f);
    let p = vs.map(|v| {
        if moved.contains(&v) {
            to
        } else {
            mesh.position(v)
        }
    });
    (p[1] - p[0]).cross(p[2] - p[0])
}

/// Collapses edges shorter than `4/5 · min(L(i), L(j))` to their midpoint
/// when legal: the link condition holds, no edge at the merged vertex
/// becomes longer than `4/3 · L`, and no surviving incident face turns by
/// 90° or more.
pub fn collapse_short_edges(mesh: &mut HalfEdgeMesh, sizing: &mut SizingField) -> MutationReport {
    let mut report = MutationReport::default();
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for h in 0..mesh.halfedge_capacity() {
            if !mesh.is_halfedge_live(h) || h > mesh.twin(h) {
                continue;
            }
            let target = sizing.edge_target(mesh, h);
            if mesh.edge_length(h) >= COLLAPSE_RATIO * target {
                continue;
            }
            if !mesh.collapse_is_legal(h) {
                continue;
            }
            let (u, v) = (mesh.origin(h), mesh.dest(h));
            let mid = (mesh.position(u) + mesh.position(v)) * 0.5;
            let (fa, fb) = (mesh.face(h), mesh.face(mesh.twin(h)));
            let mut ok = true;
            'check: for w in [u, v] {
                for hw in mesh.outgoing(w) {
                    let x = mesh.dest(hw);
                    if x != u && x != v && mid.distance(mesh.position(x)) > SPLIT_RATIO * target {
                        ok = false;
                        break 'check;
                    }
                    let f = mesh.face(hw);
                    if f == fa || f == fb {
                        continue;
                    }
                    let before = mesh.face_area_normal(f);
                    let after = face_normal_with(mesh, f, &[u, v], mid);
                    if before.dot(after) <= 0.0 || after.norm() <= 1e-12 * before.norm() {
                        ok = false;
                        break 'check;
                    }
                }
            }
            if !ok {
                continue;
            }
            let merged = 0.5 * (sizing.target[u] + sizing.target[v]);
            mesh.collapse_edge(h, mid);
            sizing.target[u] = merged;
            report.collapses += 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    report
}

/// Σ (valence − target)² over live vertices (border vertices target 4).
pub fn valence_deviation(mesh: &HalfEdgeMesh, target_valence: usize) -> usize {
    mesh.vertex_ids()
        .map(|v| {
            let t = if mesh.is_border_vertex(v) {
                4
            } else {
                target_valence
            } as isize;
            let d = mesh.valence(v) as isize - t;
            (d * d) as usize
        })
        .sum()
}

/// Flips interior edges whenever that strictly reduces the valence
/// deviation of the four affected vertices, creates no duplicate edge and
/// turns neither new face by 90° or more against the old ones.
pub fn flip_edges_for_valence(mesh: &mut HalfEdgeMesh, target_valence: usize) -> MutationReport {
    let mut report = MutationReport::default();
    let mut valence: Vec<isize> = (0..mesh.vertex_capacity())
        .map(|v| {
            if mesh.is_vertex_live(v) {
                mesh.valence(v) as isize
            } else {
                0
            }
        })
        .collect();
    let target = |mesh: &HalfEdgeMesh, v: usize| -> isize {
        if mesh.is_border_vertex(v) {
            4
        } else {
            target_valence as isize
        }
    };
    for _ in 0..MAX_SWEEPS {
        let mut changed = false;
        for h in 0..mesh.halfedge_capacity() {
            if !mesh.is_halfedge_live(h) || h > mesh.twin(h) || mesh.is_border_edge(h) {
                continue;
            }
            let t = mesh.twin(h);
            let (u, v) = (mesh.origin(h), mesh.origin(t));
            let a = mesh.origin(mesh.prev(h));
            let b = mesh.origin(mesh.prev(t));
            if valence[u] <= 3 || valence[v] <= 3 {
                continue;
            }
            let dev = |x: usize, delta: isize| {
                let d = valence[x] + delta - target(mesh, x);
                d * d
            };
            let before = dev(u, 0) + dev(v, 0) + dev(a, 0) + dev(b, 0);
            let after = dev(u, -1) + dev(v, -1) + dev(a, 1) + dev(b, 1);
            if after >= before || !mesh.flip_is_legal(h) {
                continue;
            }
            let (pu, pv, pa, pb) = (
                mesh.position(u),
                mesh.position(v),
                mesh.position(a),
                mesh.position(b),
            );
            let old0 = (pv - pu).cross(pa - pu);
            let old1 = (pu - pv).cross(pb - pv);
            let new0 = (pa - pv).cross(pb - pv);
            let new1 = (pb - pu).cross(pa - pu);
            let scale = old0.norm() + old1.norm();
            if new0.norm() <= 1e-12 * scale || new1.norm() <= 1e-12 * scale {
                continue;
            }
            if [new0, new1]
                .iter()
                .any(|n| n.dot(old0) <= 0.0 || n.dot(old1) <= 0.0)
            {
                continue;
            }
            mesh.flip_edge(h);
            valence[u] -= 1;
            valence[v] -= 1;
            valence[a] += 1;
            valence[b] += 1;
            report.flips += 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    report
}

/// Moves each interior vertex by `μ (I − n nᵀ)(centroid − p)`, all vertices
/// at once per pass. Vertices of any face whose normal would turn by 90° or
/// more keep their old position.
pub fn tangential_smooth(mesh: &mut HalfEdgeMesh, mu: f64, passes: usize) -> MutationReport {
    let n = mesh.vertex_capacity();
    for _ in 0..passes {
        let old: Vec<Vec3> = mesh.positions().to_vec();
        let mut new = old.clone();
        for v in mesh.vertex_ids() {
            if mesh.is_border_vertex(v) {
                continue;
            }
            let (sum, count) = mesh.outgoing(v).fold((Vec3::ZERO, 0usize), |(s, k), h| {
                (s + old[mesh.dest(h)], k + 1)
            });
            let delta = sum / count as f64 - old[v];
            let normal = mesh.vertex_normal(v);
            new[v] = old[v] + (delta - normal * normal.dot(delta)) * mu;
        }
        let face_normals: Vec<(usize, Vec3)> = mesh
            .face_ids()
            .map(|f| (f, mesh.face_area_normal(f)))
            .collect();
        mesh.set_positions(&new);
        let mut reverted = vec![false; n];
        loop {
            let mut any = false;
            for &(f, before) in &face_normals {
                let after = mesh.face_area_normal(f);
                if before.dot(after) > 0.0 {
                    continue;
                }
                for v in mesh.face_vertices(f) {
                    if !reverted[v] {
                        reverted[v] = true;
                        mesh.positions_mut()[v] = old[v];
                        any = true;
                    }
                }
            }
            if !any {
                break;
            }
        }
    }
    MutationReport {
        smooth_passes: passes,
        ..MutationReport::default()
    }
}

/// Fraction of edges whose length lies in `[0.8, 4/3]` of their target.
pub fn fraction_in_band(mesh: &HalfEdgeMesh, sizing: &SizingField) -> f64 {
    let (mut inside, mut total) = (0usize, 0usize);
    for h in mesh.edge_ids() {
        let r = mesh.edge_length(h) / sizing.edge_target(mesh, h);
        if (BAND_LOW..=BAND_HIGH).contains(&r) {
            inside += 1;
        }
        total += 1;
    }
    if total == 0 {
        1.0
    } else {
        inside as f64 / total as f64
    }
}

/// Result of one remesh event. `sizing` is indexed like the output mesh.
#[derive(Debug, Clone)]
pub struct RemeshOutcome {
    pub mesh: HalfEdgeMesh,
    pub sizing: SizingField,
    pub report: MutationReport,
}

/// Sizing field an event in `mode` would use for `mesh`.
pub fn event_sizing(
    mesh: &HalfEdgeMesh,
    curvature: &CurvatureField,
    params: &RemeshParams,
    mode: RemeshMode,
) -> SizingField {
    let mut effective = params.clone();
    if params.mean_edge_factor > 0.0 {
        let cap = params.mean_edge_factor * mesh.mean_edge_length();
        effective.max_edge = params.max_edge.min(cap).max(params.min_edge);
    }
    let mut sizing = sizing_field(mesh, curvature, &effective);
    if mode == RemeshMode::Coarsen {
        for t in &mut sizing.target {
            *t *= 2.0;
        }
    }
    sizing
}

/// One full remesh event; the output is compact, validated and has the same
/// Euler characteristic as the input.
pub fn remesh_event(
    mesh: &HalfEdgeMesh,
    curvature: &CurvatureField,
    params: &RemeshParams,
    mode: RemeshMode,
) -> Result<RemeshOutcome, RemeshError> {
    params.validate()?;
    let chi_before = mesh.topology_summary().euler_characteristic;
    let mut work = mesh.clone();
    let mut sizing = event_sizing(mesh, curvature, params, mode);
    let mut report = MutationReport::default();
    for _ in 0..params.passes.max(1) {
        report += split_long_edges(&mut work, &mut sizing);
        report += collapse_short_edges(&mut work, &mut sizing);
        report += flip_edges_for_valence(&mut work, params.target_valence);
        report += tangential_smooth(&mut work, params.smoothing, 1);
    }
    work.validate().map_err(RemeshError::RemeshInternalError)?;
    let compact = work.compacted().map_err(RemeshError::RemeshInternalError)?;
    let target = work.vertex_ids().map(|v| sizing.target[v]).collect();
    let chi_after = compact.topology_summary().euler_characteristic;
    if chi_after != chi_before {
        return Err(RemeshError::TopologyChanged {
            before: chi_before,
            after: chi_after,
        });
    }
    #[cfg(feature = "invariant-checks")]
    if compact.is_closed() {
        crate::invariants::assert_pipeline_mesh(&compact, "remesh_event");
    }
    Ok(RemeshOutcome {
        mesh: compact,
        sizing: SizingField { target },
        report,
    })
}

/// V-cycle timing: events every `P` iterations with `P` drawn uniformly from
/// the configured range, alternating coarsen and refine (coarsen first).
#[derive(Debug, Clone)]
pub struct RemeshSchedule {
    rng: ChaCha8Rng,
    period: (usize, usize),
    next_event: usize,
    next_mode: RemeshMode,
    events: usize,
}

impl RemeshSchedule {
    pub fn new(period: (usize, usize), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = rng.random_range(period.0..=period.1);
        RemeshSchedule {
            rng,
            period,
            next_event: first,
            next_mode: RemeshMode::Coarsen,
            events: 0,
        }
    }

    /// Iteration at which the next event fires.
    pub fn next_event(&self) -> usize {
        self.next_event
    }

    pub fn events_fired(&self) -> usize {
        self.events
    }

    /// Returns the mode if an event is due at `iteration`, advancing the schedule.
    pub fn poll(&mut self, iteration: usize) -> Option<RemeshMode> {
        if iteration < self.next_event {
            return None;
        }
        let mode = self.next_mode;
        self.next_mode = match mode {
            RemeshMode::Coarsen => RemeshMode::Refine,
            RemeshMode::Refine => RemeshMode::Coarsen,
        };
        self.next_event = iteration + self.rng.random_range(self.period.0..=self.period.1);
        self.events += 1;
        Some(mode)
    }
}
