//! Soft-silhouette and flat-normal rasterizer with exact analytic gradients.
//!
//! Per pixel the forward model produces
//! - a hard mask from front-facing triangles (depth-tested, crack-free),
//! - coverage `c = ŝ(d/σ)` where `d` is the signed distance from the pixel
//!   centre to the nearest outer-silhouette segment (positive when masked) and
//!   `ŝ` is the logistic rescaled so it reaches exactly 0 and 1 at `|d| = 3σ`,
//! - the camera-space normal of the front-most face (zero when unmasked).
//!
//! Everything between mask, face assignment and chosen silhouette segment
//! changes is smooth; the backward pass differentiates exactly that model.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::Vec3;
use crate::mesh::HalfEdgeMesh;

/// Marker for "no face" / "no segment" in per-pixel index buffers.
pub const NONE: u32 = u32::MAX;
/// Default vertical field of view (radians).
pub const DEFAULT_FOV_Y: f64 = 55.0 * core::f64::consts::PI / 180.0;
/// Default camera distance from the origin.
pub const DEFAULT_RIG_RADIUS: f64 = 2.5;
/// Width of the soft band in units of σ.
pub const BAND: f64 = 3.0;

const TILE: usize = 8;
const PROBE_OFFSET: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("camera {camera} is inside the mesh bounding sphere or sees a vertex behind it")]
    DegenerateProjection { camera: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("buffer size mismatch: expected {expected} pixels, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Pinhole camera looking at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn look_at(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Camera, RenderError> {
        let cam = Camera {
            position,
            target,
            up,
            fov_y,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let f = self.target - self.position;
        if !(f.norm() > 0.0) {
            return Err(RenderError::InvalidCamera("position equals look-at point"));
        }
        if !(f.normalized().cross(self.up).norm() > 1e-9) {
            return Err(RenderError::InvalidCamera(
                "up hint is parallel to the view direction",
            ));
        }
        if !(self.fov_y > 0.0 && self.fov_y < core::f64::consts::PI) {
            return Err(RenderError::InvalidCamera(
                "field of view must lie in (0, π)",
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidCamera(
                "image must have at least one pixel",
            ));
        }
        Ok(())
    }

    /// Right, up and forward unit vectors (right-handed: `r × u = −f`).
    pub fn basis(&self) -> [Vec3; 3] {
        let f = (self.target - self.position).normalized();
        let r = f.cross(self.up).normalized();
        let u = r.cross(f);
        [r, u, f]
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.fov_y).tan()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn projector(&self) -> Projector {
        let [r, u, f] = self.basis();
        Projector {
            origin: self.position,
            r,
            u,
            f,
            fpx: self.focal_px(),
            cx: 0.5 * self.width as f64,
            cy: 0.5 * self.height as f64,
        }
    }

    /// Camera-space direction of a world vector: `(r·v, u·v, −f·v)`.
    pub fn to_camera_space(&self, v: Vec3) -> Vec3 {
        let [r, u, f] = self.basis();
        Vec3::new(r.dot(v), u.dot(v), -f.dot(v))
    }

    /// Pixel coordinates `(x, y)` and view depth of a world point.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let s = self.projector().project(p);
        (s.x, s.y, s.z)
    }
}

struct Projector {
    origin: Vec3,
    r: Vec3,
    u: Vec3,
    f: Vec3,
    fpx: f64,
    cx: f64,
    cy: f64,
}

impl Projector {
    /// `(px, py, depth)`; y grows downwards.
    #[inline]
    fn project(&self, p: Vec3) -> Vec3 {
        let d = p - self.origin;
        let (xc, yc, zc) = (self.r.dot(d), self.u.dot(d), self.f.dot(d));
        Vec3::new(
            self.cx + self.fpx * xc / zc,
            self.cy - self.fpx * yc / zc,
            zc,
        )
    }

    /// World-space gradients of `px` and `py`.
    #[inline]
    fn jacobian(&self, p: Vec3) -> (Vec3, Vec3) {
        let d = p - self.origin;
        let (xc, yc, zc) = (self.r.dot(d), self.u.dot(d), self.f.dot(d));
        let k = self.fpx / zc;
        let dx = (self.r - self.f * (xc / zc)) * k;
        let dy = (self.u - self.f * (yc / zc)) * -k;
        (dx, dy)
    }
}

/// `count` cameras on a sphere of radius `radius` around the origin, placed
/// on a Fibonacci lattice; a single camera sits on `+z`.
pub fn make_camera_rig(
    count: usize,
    radius: f64,
    width: usize,
    height: usize,
    fov_y: f64,
) -> Vec<Camera> {
    let golden = core::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let dir = if count == 1 {
                Vec3::Z
            } else {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                Vec3::new(rho * phi.cos(), rho * phi.sin(), z)
            };
            let up = if dir.z.abs() > 0.99 { Vec3::Y } else { Vec3::Z };
            Camera {
                position: dir * radius,
                target: Vec3::ZERO,
                up,
                fov_y,
                width,
                height,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Logistic width in pixels.
    pub sigma: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { sigma: 1.0 }
    }
}

/// One rendered (or loaded) view. `face`, `segment`, `side` and `segments`
/// are empty for views that did not come out of [`render`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub camera_id: usize,
    pub width: usize,
    pub height: usize,
    pub coverage: Vec<f64>,
    pub normals: Vec<Vec3>,
    /// Front-most face per pixel, or [`NONE`].
    pub face: Vec<u32>,
    /// Index into `segments` of the silhouette segment shaping the pixel's
    /// coverage, or [`NONE`] when the pixel is saturated.
    pub segment: Vec<u32>,
    /// Which side of its segment's line the pixel centre lies on (sign of
    /// the 2D cross product, lower vertex id first); 0 without a segment.
    /// Coverage has a kink where this changes on a masked pixel.
    pub side: Vec<i8>,
    /// Outer silhouette segments as vertex-id pairs.
    pub segments: Vec<[usize; 2]>,
}

impl RenderedView {
    /// A view from raw buffers, e.g. decoded images.
    pub fn from_buffers(
        camera_id: usize,
        width: usize,
        height: usize,
        coverage: Vec<f64>,
        normals: Vec<Vec3>,
    ) -> Result<RenderedView, RenderError> {
        let n = width * height;
        for got in [coverage.len(), normals.len()] {
            if got != n {
                return Err(RenderError::ShapeMismatch { expected: n, got });
            }
        }
        Ok(RenderedView {
            camera_id,
            width,
            height,
            coverage,
            normals,
            face: Vec::new(),
            segment: Vec::new(),
            side: Vec::new(),
            segments: Vec::new(),
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn total_coverage(&self) -> f64 {
        self.coverage.iter().sum()
    }

    /// Hash of the discrete choices made per pixel (face, segment, side).
    /// Two renders with equal signatures lie on the same smooth piece.
    pub fn signature(&self) -> u64 {
        let mut h = Fnv::new();
        for &f in &self.face {
            h.write(f as u64);
        }
        for (&s, _) in self.segment.iter().zip(0..) {
            let id = if s == NONE {
                u64::MAX
            } else {
                let [a, b] = self.segments[s as usize];
                ((a as u64) << 32) ^ b as u64
            };
            h.write(id);
        }
        for &s in &self.side {
            h.write(s as u64);
        }
        h.finish()
    }
}

/// FNV-1a, enough for change detection.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Loss adjoint per pixel: `∂loss/∂coverage` and `∂loss/∂normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewAdjoint {
    pub coverage: Vec<f64>,
    pub normals: Vec<Vec3>,
}

impl ViewAdjoint {
    pub fn zeros(pixels: usize) -> Self {
        ViewAdjoint {
            coverage: vec![0.0; pixels],
            normals: vec![Vec3::ZERO; pixels],
        }
    }
}

/// Per-vertex `∂loss/∂x`, indexed by vertex id.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGradients {
    pub grad: Vec<Vec3>,
}

/// Rescaled logistic `(s(x) − s(−3)) / (s(3) − s(−3))`, written through
/// `tanh` so that it is exactly ½ at 0 and odd about it; exactly 0 at
/// `x ≤ −3` and 1 at `x ≥ 3`.
#[inline]
pub fn soft_step(x: f64) -> f64 {
    if x <= -BAND {
        return 0.0;
    }
    if x >= BAND {
        return 1.0;
    }
    (0.5 + 0.5 * (0.5 * x).tanh() / (0.5 * BAND).tanh()).clamp(0.0, 1.0)
}

#[inline]
fn soft_step_derivative(x: f64) -> f64 {
    if x.abs() >= BAND {
        return 0.0;
    }
    let t = (0.5 * x).tanh();
    0.25 * (1.0 - t * t) / (0.5 * BAND).tanh()
}

#[inline]
fn cross2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Distance from `p` to segment `ab` with the clamped parameter `t`.
#[inline]
fn segment_distance(px: f64, py: f64, a: Vec3, b: Vec3) -> (f64, f64) {
    let (ex, ey) = (b.x - a.x, b.y - a.y);
    let len2 = ex * ex + ey * ey;
    let t = (((px - a.x) * ex + (py - a.y) * ey) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a.x + t * ex, a.y + t * ey);
    (((px - qx) * (px - qx) + (py - qy) * (py - qy)).sqrt(), t)
}

struct Projected {
    screen: Vec<Vec3>,
    /// Twice the signed screen area of every face (y down: front faces are negative).
    area2: Vec<f64>,
}

fn project_mesh(
    mesh: &HalfEdgeMesh,
    camera: &Camera,
    camera_id: usize,
) -> Result<(Projector, Projected), RenderError> {
    camera.validate()?;
    let proj = camera.projector();
    let (lo, hi) = mesh.bounding_box();
    let centre = (lo + hi) * 0.5;
    let radius = mesh
        .vertex_ids()
        .map(|v| mesh.position(v).distance(centre))
        .fold(0.0, f64::max);
    if camera.position.distance(centre) <= radius {
        return Err(RenderError::DegenerateProjection { camera: camera_id });
    }
    let mut screen = vec![Vec3::ZERO; mesh.vertex_capacity()];
    for v in mesh.vertex_ids() {
        let s = proj.project(mesh.position(v));
        if !(s.z > 1e-9) {
            return Err(RenderError::DegenerateProjection { camera: camera_id });
        }
        screen[v] = s;
    }
    let mut area2 = vec![0.0; mesh.face_capacity()];
    for f in mesh.face_ids() {
        let [a, b, c] = mesh.face_vertices(f).map(|v| screen[v]);
        area2[f] = cross2(b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
    }
    Ok((proj, Projected { screen, area2 }))
}

#[inline]
fn is_front(area2: f64) -> bool {
    area2 < 0.0
}

/// Edge function of the undirected edge `{i, j}` evaluated from its lower-id
/// endpoint, so both incident faces see bitwise-negated values.
#[inline]
fn canonical_edge(screen: &[Vec3], i: usize, j: usize, px: f64, py: f64) -> f64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let (a, b) = (screen[lo], screen[hi]);
    cross2(b.x - a.x, b.y - a.y, px - a.x, py - a.y)
}

/// Inside test for a front face `[v0, v1, v2]` at a pixel centre; returns
/// the three directed edge values (opposite to v2, v0, v1) when inside.
/// Points exactly on a shared edge go to the face traversing it low→high.
#[inline]
fn inside_front(screen: &[Vec3], tri: [usize; 3], px: f64, py: f64) -> Option<[f64; 3]> {
    let mut e = [0.0; 3];
    for k in 0..3 {
        let (i, j) = (tri[k], tri[(k + 1) % 3]);
        let c = canonical_edge(screen, i, j, px, py);
        // Front faces have negative area, so interior directed values are negative.
        let v = if i < j { -c } else { c };
        if v < 0.0 || (v == 0.0 && i > j) {
            return None;
        }
        e[k] = v;
    }
    Some(e)
}

fn point_in_triangle(a: Vec3, b: Vec3, c: Vec3, px: f64, py: f64) -> bool {
    let d0 = cross2(b.x - a.x, b.y - a.y, px - a.x, py - a.y);
    let d1 = cross2(c.x - b.x, c.y - b.y, px - b.x, py - b.y);
    let d2 = cross2(a.x - c.x, a.y - c.y, px - c.x, py - c.y);
    (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0) || (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0)
}

#[inline]
fn pixel_range(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let start = (lo - 0.5).ceil().max(0.0);
    let end = (hi - 0.5).floor().min(n as f64 - 1.0);
    if end < start {
        (1, 0)
    } else {
        (start as usize, end as usize)
    }
}

/// Renders `mesh` through `camera`.
pub fn render(
    mesh: &HalfEdgeMesh,
    camera: &Camera,
    camera_id: usize,
    params: &RenderParams,
) -> Result<RenderedView, RenderError> {
    let (_, pr) = project_mesh(mesh, camera, camera_id)?;
    let (w, h) = (camera.width, camera.height);
    let screen = &pr.screen;

    // Hard mask, depth test and tile bins of front faces.
    let mut face = vec![NONE; w * h];
    let mut inv_depth = vec![f64::NEG_INFINITY; w * h];
    let (tx, ty) = (w.div_ceil(TILE), h.div_ceil(TILE));
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tx * ty];
    for f in mesh.face_ids() {
        if !is_front(pr.area2[f]) {
            continue;
        }
        let tri = mesh.face_vertices(f);
        let [a, b, c] = tri.map(|v| screen[v]);
        let (xlo, xhi) = (a.x.min(b.x).min(c.x), a.x.max(b.x).max(c.x));
        let (ylo, yhi) = (a.y.min(b.y).min(c.y), a.y.max(b.y).max(c.y));
        if xhi < 0.0 || yhi < 0.0 || xlo > w as f64 || ylo > h as f64 {
            continue;
        }
        let tx0 = (xlo.max(0.0) as usize / TILE).min(tx - 1);
        let tx1 = (xhi.max(0.0) as usize / TILE).min(tx - 1);
        let ty0 = (ylo.max(0.0) as usize / TILE).min(ty - 1);
        let ty1 = (yhi.max(0.0) as usize / TILE).min(ty - 1);
        for j in ty0..=ty1 {
            for i in tx0..=tx1 {
                bins[j * tx + i].push(f as u32);
            }
        }
        let area = -pr.area2[f];
        let (i0, i1) = pixel_range(xlo, xhi, w);
        let (j0, j1) = pixel_range(ylo, yhi, h);
        for j in j0..=j1 {
            let py = j as f64 + 0.5;
            for i in i0..=i1 {
                let px = i as f64 + 0.5;
                if let Some(e) = inside_front(screen, tri, px, py) {
                    // e[k] is opposite vertex (k + 2) % 3.
                    let inv = (e[1] / a.z + e[2] / b.z + e[0] / c.z) / area;
                    let p = j * w + i;
                    if inv > inv_depth[p] {
                        inv_depth[p] = inv;
                        face[p] = f as u32;
                    }
                }
            }
        }
    }

    // Outer silhouette segments.
    let mut segments: Vec<[usize; 2]> = Vec::new();
    for he in mesh.edge_ids() {
        let t = mesh.twin(he);
        let fa = mesh.face(he);
        let fb = mesh.face(t);
        let front_a = fa != crate::mesh::INVALID && is_front(pr.area2[fa]);
        let front_b = fb != crate::mesh::INVALID && is_front(pr.area2[fb]);
        if front_a == front_b {
            continue;
        }
        let hf = if front_a { he } else { t };
        let (u, v) = (mesh.origin(hf), mesh.dest(hf));
        let opposite = mesh.origin(mesh.prev(hf));
        let (a, b, o) = (screen[u], screen[v], screen[opposite]);
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len = (ex * ex + ey * ey).sqrt();
        if !(len > 1e-12) {
            continue;
        }
        let (mut nx, mut ny) = (-ey / len, ex / len);
        if nx * (o.x - a.x) + ny * (o.y - a.y) > 0.0 {
            nx = -nx;
            ny = -ny;
        }
        let qx = 0.5 * (a.x + b.x) + PROBE_OFFSET * nx;
        let qy = 0.5 * (a.y + b.y) + PROBE_OFFSET * ny;
        let covered = qx >= 0.0
            && qy >= 0.0
            && qx < w as f64
            && qy < h as f64
            && bins[(qy as usize / TILE) * tx + qx as usize / TILE]
                .iter()
                .any(|&g| {
                    let [p0, p1, p2] = mesh.face_vertices(g as usize).map(|x| screen[x]);
                    point_in_triangle(p0, p1, p2, qx, qy)
                });
        if !covered {
            segments.push(if u < v { [u, v] } else { [v, u] });
        }
    }

    // Signed distance to the nearest segment inside the soft band.
    let reach = BAND * params.sigma;
    let mut best = vec![f64::INFINITY; w * h];
    let mut segment = vec![NONE; w * h];
    let mut side = vec![0i8; w * h];
    for (s, &[u, v]) in segments.iter().enumerate() {
        let (a, b) = (screen[u], screen[v]);
        let (i0, i1) = pixel_range(a.x.min(b.x) - reach, a.x.max(b.x) + reach, w);
        let (j0, j1) = pixel_range(a.y.min(b.y) - reach, a.y.max(b.y) + reach, h);
        for j in j0..=j1 {
            let py = j as f64 + 0.5;
            for i in i0..=i1 {
                let px = i as f64 + 0.5;
                let (d, _) = segment_distance(px, py, a, b);
                let p = j * w + i;
                if d < reach && d < best[p] {
                    best[p] = d;
                    segment[p] = s as u32;
                    let c = cross2(b.x - a.x, b.y - a.y, px - a.x, py - a.y);
                    side[p] = (c > 0.0) as i8 - (c < 0.0) as i8;
                }
            }
        }
    }

    let [r, u, f] = camera.basis();
    let mut coverage = vec![0.0; w * h];
    let mut normals = vec![Vec3::ZERO; w * h];
    let mut face_normals = vec![Vec3::ZERO; mesh.face_capacity()];
    for fid in mesh.face_ids() {
        if is_front(pr.area2[fid]) {
            let n = mesh.face_normal(fid);
            face_normals[fid] = Vec3::new(r.dot(n), u.dot(n), -f.dot(n));
        }
    }
    for p in 0..w * h {
        let masked = face[p] != NONE;
        coverage[p] = if segment[p] != NONE {
            let d = if masked { best[p] } else { -best[p] };
            soft_step(d / params.sigma)
        } else if masked {
            1.0
        } else {
            0.0
        };
        if masked {
            normals[p] = face_normals[face[p] as usize];
        }
    }

    Ok(RenderedView {
        camera_id,
        width: w,
        height: h,
        coverage,
        normals,
        face,
        segment,
        side,
        segments,
    })
}

/// Exact vector-Jacobian product of [`render`] at the configuration that
/// produced `view`.
pub fn render_backward(
    mesh: &HalfEdgeMesh,
    camera: &Camera,
    view: &RenderedView,
    adjoint: &ViewAdjoint,
    params: &RenderParams,
) -> Result<ViewGradients, RenderError> {
    let n = view.pixel_count();
    for got in [
        adjoint.coverage.len(),
        adjoint.normals.len(),
        view.face.len(),
        view.segment.len(),
    ] {
        if got != n {
            return Err(RenderError::ShapeMismatch { expected: n, got });
        }
    }
    let (proj, pr) = project_mesh(mesh, camera, view.camera_id)?;
    let mut grad = vec![Vec3::ZERO; mesh.vertex_capacity()];

    // Normal channel: accumulate per face, then chain through normalization.
    let [r, u, f] = camera.basis();
    let mut face_adj = vec![Vec3::ZERO; mesh.face_capacity()];
    let mut touched = vec![false; mesh.face_capacity()];
    for p in 0..n {
        let fid = view.face[p];
        if fid != NONE {
            face_adj[fid as usize] += adjoint.normals[p];
            touched[fid as usize] = true;
        }
    }
    for fid in mesh.face_ids() {
        if !touched[fid] {
            continue;
        }
        let g = face_adj[fid];
        let gw = r * g.x + u * g.y - f * g.z;
        let [ia, ib, ic] = mesh.face_vertices(fid);
        let (a, b, c) = (mesh.position(ia), mesh.position(ib), mesh.position(ic));
        let cr = (b - a).cross(c - a);
        let len = cr.norm();
        if !(len > 0.0) {
            continue;
        }
        let nrm = cr / len;
        let gc = (gw - nrm * nrm.dot(gw)) / len;
        let gb = (c - a).cross(gc);
        let gcv = gc.cross(b - a);
        grad[ib] += gb;
        grad[ic] += gcv;
        grad[ia] -= gb + gcv;
    }

    // Coverage channel: chain through the distance to the chosen segment.
    let sigma = params.sigma;
    let mut screen_grad = vec![(0.0f64, 0.0f64); mesh.vertex_capacity()];
    let mut has_screen = vec![false; mesh.vertex_capacity()];
    for p in 0..n {
        let s = view.segment[p];
        let ac = adjoint.coverage[p];
        if s == NONE || ac == 0.0 {
            continue;
        }
        let [iu, iv] = view.segments[s as usize];
        let (a, b) = (pr.screen[iu], pr.screen[iv]);
        let (px, py) = ((p % view.width) as f64 + 0.5, (p / view.width) as f64 + 0.5);
        let (dist, t) = segment_distance(px, py, a, b);
        if !(dist > 0.0) {
            continue;
        }
        let sign = if view.face[p] != NONE { 1.0 } else { -1.0 };
        let k = ac * soft_step_derivative(sign * dist / sigma) / sigma * sign;
        if k == 0.0 {
            continue;
        }
        let (qx, qy) = (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        let (nx, ny) = ((px - qx) / dist, (py - qy) / dist);
        let (ka, kb) = (-(1.0 - t) * k, -t * k);
        screen_grad[iu].0 += ka * nx;
        screen_grad[iu].1 += ka * ny;
        screen_grad[iv].0 += kb * nx;
        screen_grad[iv].1 += kb * ny;
        has_screen[iu] = true;
        has_screen[iv] = true;
    }
    for v in mesh.vertex_ids() {
        if has_screen[v] {
            let (dx, dy) = proj.jacobian(mesh.position(v));
            let (gx, gy) = screen_grad[v];
            grad[v] += dx * gx + dy * gy;
        }
    }
    Ok(ViewGradients { grad })
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `½ (mean |c − ĉ| + mean |n − n̂|)` over pixels (normals over all three
/// channels), with its adjoint. The subgradient at zero residual is zero.
pub fn l1_view_loss(
    view: &RenderedView,
    target: &RenderedView,
) -> Result<(f64, ViewAdjoint), RenderError> {
    let n = view.pixel_count();
    if target.pixel_count() != n || target.coverage.len() != n || target.normals.len() != n {
        return Err(RenderError::ShapeMismatch {
            expected: n,
            got: target.coverage.len(),
        });
    }
    let wc = 0.5 / n as f64;
    let wn = 0.5 / (3 * n) as f64;
    let mut cov_sum = 0.0;
    let mut nrm_sum = 0.0;
    let mut adj = ViewAdjoint::zeros(n);
    for p in 0..n {
        let dc = view.coverage[p] - target.coverage[p];
        cov_sum += dc.abs();
        adj.coverage[p] = wc * sign0(dc);
        let dn = view.normals[p] - target.normals[p];
        nrm_sum += dn.x.abs() + dn.y.abs() + dn.z.abs();
        adj.normals[p] = Vec3::new(sign0(dn.x), sign0(dn.y), sign0(dn.z)) * wn;
    }
    Ok((wc * cov_sum + wn * nrm_sum, adj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{grid_torus, icosphere};

    fn front_camera(size: usize, fov: f64) -> Camera {
        Camera::look_at(
            Vec3::new(0.0, 0.0, 2.5),
            Vec3::ZERO,
            Vec3::Y,
            fov,
            size,
            size,
        )
        .unwrap()
    }

    #[test]
    fn rig_single_camera_on_z() {
        let rig = make_camera_rig(1, 2.5, 8, 8, DEFAULT_FOV_Y);
        assert_eq!(rig.len(), 1);
        assert!((rig[0].position - Vec3::new(0.0, 0.0, 2.5)).norm() < 1e-15);
    }

    #[test]
    fn rig_36_is_well_separated() {
        let rig = make_camera_rig(36, 2.5, 8, 8, DEFAULT_FOV_Y);
        let mut min_angle = f64::INFINITY;
        for i in 0..rig.len() {
            assert!((rig[i].position.norm() - 2.5).abs() < 1e-12);
            rig[i].validate().unwrap();
            for j in 0..i {
                let c = rig[i]
                    .position
                    .normalized()
                    .dot(rig[j].position.normalized());
                min_angle = min_angle.min(c.clamp(-1.0, 1.0).acos());
            }
        }
        assert!(
            min_angle.to_degrees() > 20.0,
            "min separation {}",
            min_angle.to_degrees()
        );
    }

    #[test]
    fn logistic_midpoint_and_saturation() {
        assert_eq!(soft_step(0.0), 0.5);
        assert_eq!(soft_step(3.0), 1.0);
        assert_eq!(soft_step(-3.0), 0.0);
        assert!(soft_step(2.999999) < 1.0);
        assert_eq!(soft_step(1.3) + soft_step(-1.3), 1.0);
        let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
        let direct = (logistic(1.3) - logistic(-3.0)) / (logistic(3.0) - logistic(-3.0));
        assert!((soft_step(1.3) - direct).abs() < 1e-15);
    }

    #[test]
    fn sphere_disc_area() {
        // Camera at 2.5 sees the unit sphere under half-angle asin(0.4); choose
        // the field of view so its silhouette diameter is half the image.
        let size = 128;
        let half_angle = (1.0f64 / 2.5).asin();
        let fov = 2.0 * (2.0 * half_angle.tan()).atan();
        let cam = front_camera(size, fov);
        let mesh = icosphere(5, 1.0);
        let view = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        let radius_px = size as f64 / 4.0;
        let disc = core::f64::consts::PI * radius_px * radius_px;
        let rel = (view.total_coverage() - disc).abs() / disc;
        assert!(rel < 0.02, "relative area error {rel}");
        // far corner is empty
        assert_eq!(view.coverage[0], 0.0);
    }

    #[test]
    fn normals_are_unit_and_match_faces() {
        let cam = front_camera(48, DEFAULT_FOV_Y);
        let mesh = grid_torus(24, 12, 0.7, 0.3);
        let view = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        for p in 0..view.pixel_count() {
            if view.coverage[p] > 0.5 {
                assert!((view.normals[p].norm() - 1.0).abs() < 1e-6);
            }
            if view.face[p] != NONE {
                let expect = cam.to_camera_space(mesh.face_normal(view.face[p] as usize));
                assert!((view.normals[p] - expect).norm() < 1e-12);
                assert!(view.normals[p].z > 0.0, "front faces point at the camera");
            }
        }
    }

    #[test]
    fn torus_hole_is_empty() {
        // Looking down the axis, the centre pixel lies in the hole.
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, 2.5),
            Vec3::ZERO,
            Vec3::Y,
            DEFAULT_FOV_Y,
            64,
            64,
        )
        .unwrap();
        let mesh = grid_torus(48, 24, 0.7, 0.3);
        let view = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        let centre = 32 * 64 + 32;
        assert_eq!(view.coverage[centre], 0.0);
        assert_eq!(view.face[centre], NONE);
    }

    #[test]
    fn deterministic_and_camera_inside_fails() {
        let cam = front_camera(32, DEFAULT_FOV_Y);
        let mesh = icosphere(2, 1.0);
        let a = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        let b = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        assert_eq!(a, b);
        let inside =
            Camera::look_at(Vec3::new(0.0, 0.0, 0.5), Vec3::ZERO, Vec3::Y, 1.0, 8, 8).unwrap();
        assert_eq!(
            render(&mesh, &inside, 3, &RenderParams::default()).unwrap_err(),
            RenderError::DegenerateProjection { camera: 3 }
        );
    }

    #[test]
    fn scaling_up_does_not_reduce_coverage() {
        let cam = front_camera(40, DEFAULT_FOV_Y);
        let mut last = 0.0;
        for k in 0..6 {
            let mut m = icosphere(2, 1.0);
            let s = 0.5 + 0.1 * k as f64;
            m.transform_positions(|p| p * s);
            let c = render(&m, &cam, 0, &RenderParams::default())
                .unwrap()
                .total_coverage();
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let cam = front_camera(32, DEFAULT_FOV_Y);
        let mesh = icosphere(1, 1.0);
        let view = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        let g = render_backward(
            &mesh,
            &cam,
            &view,
            &ViewAdjoint::zeros(view.pixel_count()),
            &RenderParams::default(),
        )
        .unwrap();
        assert!(g.grad.iter().all(|v| *v == Vec3::ZERO));
    }

    #[test]
    fn hidden_vertices_get_no_gradient() {
        let cam = front_camera(32, DEFAULT_FOV_Y);
        let mesh = icosphere(2, 1.0);
        let view = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        let adj = ViewAdjoint {
            coverage: vec![1.0; view.pixel_count()],
            normals: vec![Vec3::splat(1.0); view.pixel_count()],
        };
        let g = render_backward(&mesh, &cam, &view, &adj, &RenderParams::default()).unwrap();
        for v in mesh.vertex_ids() {
            // Vertices well behind the silhouette plane belong to no visible face.
            if mesh.position(v).z < -0.6 {
                assert_eq!(g.grad[v], Vec3::ZERO);
            }
        }
    }

    #[test]
    fn translation_derivative_matches_finite_difference() {
        let cam = front_camera(64, DEFAULT_FOV_Y);
        let mesh = grid_torus(24, 12, 0.7, 0.3);
        let mut tilted = mesh.clone();
        let rot = crate::geometry::Mat3::rotation(Vec3::new(1.0, 0.3, 0.0).normalized(), 0.6);
        tilted.transform_positions(|p| rot.mul_vec(p));
        let params = RenderParams::default();
        let view = render(&tilted, &cam, 0, &params).unwrap();
        let adj = ViewAdjoint {
            coverage: vec![1.0; view.pixel_count()],
            normals: vec![Vec3::ZERO; view.pixel_count()],
        };
        let g = render_backward(&tilted, &cam, &view, &adj, &params).unwrap();
        let analytic: f64 = g.grad.iter().map(|v| v.x).sum();
        let delta = 1e-4;
        let shifted = |d: f64| {
            let mut m = tilted.clone();
            m.transform_positions(|p| p + Vec3::new(d, 0.0, 0.0));
            render(&m, &cam, 0, &params).unwrap().total_coverage()
        };
        let fd = (shifted(delta) - shifted(-delta)) / (2.0 * delta);
        let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs());
        assert!(analytic.abs() > 1.0);
        assert!(rel < 1e-3, "analytic {analytic} fd {fd} rel {rel}");
    }

    #[test]
    fn l1_loss_of_self_is_zero() {
        let cam = front_camera(24, DEFAULT_FOV_Y);
        let mesh = icosphere(2, 1.0);
        let view = render(&mesh, &cam, 0, &RenderParams::default()).unwrap();
        let (loss, adj) = l1_view_loss(&view, &view).unwrap();
        assert_eq!(loss, 0.0);
        assert!(adj.coverage.iter().all(|&c| c == 0.0));
    }
}
