//! Index-based half-edge triangle mesh.
//!
//! Every face owns three consecutive half-edges at construction time; border
//! half-edges (face = [`INVALID`]) are appended after them so that `twin` is an
//! involution everywhere. Undirected edges are never stored: an edge is a
//! pair of twin half-edges.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{triangle_area, Vec3};

/// Sentinel id for "no face" (border half-edges) and removed elements.
pub const INVALID: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("face {face} references vertex {vertex}, but only {num_vertices} vertices exist")]
    IndexOutOfRange {
        face: usize,
        vertex: usize,
        num_vertices: usize,
    },
    #[error("face {0} repeats a vertex")]
    DegenerateFace(usize),
    #[error("edge ({0}, {1}) is bounded by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("the faces around vertex {0} do not form a single fan")]
    NonManifoldVertex(usize),
    #[error("vertex {0} is not referenced by any face")]
    IsolatedVertex(usize),
    #[error("edge ({0}, {1}) is traversed in the same direction by two faces")]
    InconsistentOrientation(usize, usize),
    #[error("half-edge {0} violates the connectivity invariants")]
    Corrupt(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfEdge {
    /// Vertex the half-edge leaves.
    pub origin: usize,
    pub twin: usize,
    /// Next half-edge counter-clockwise around the same face (or border loop).
    pub next: usize,
    /// Incident face, or [`INVALID`] on a border.
    pub face: usize,
}

/// Combinatorial summary of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopologySummary {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_faces: usize,
    pub num_components: usize,
    pub euler_characteristic: i64,
    /// `1 - χ/2`; present only for closed, orientable, connected meshes.
    pub genus: Option<u32>,
    pub is_closed: bool,
    /// Always true: inconsistent orientation is rejected at construction.
    pub is_orientable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfEdgeMesh {
    positions: Vec<Vec3>,
    halfedges: Vec<HalfEdge>,
    face_halfedge: Vec<usize>,
    vertex_halfedge: Vec<usize>,
    live_vertices: usize,
    live_faces: usize,
    live_halfedges: usize,
}

impl HalfEdgeMesh {
    /// Builds and validates a mesh from a triangle list.
    ///
    /// Half-edge `3f + k` runs from `triangles[f][k]` to `triangles[f][(k+1)%3]`;
    /// border half-edges follow in the order of their interior twins.
    pub fn build(triangles: &[[usize; 3]], positions: Vec<Vec3>) -> Result<Self, MeshError> {
        let nv = positions.len();
        let nf = triangles.len();
        for (f, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        vertex: v,
                        num_vertices: nv,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateFace(f));
            }
        }

        // Faces per undirected edge, then directed uniqueness.
        let mut undirected: BTreeMap<(usize, usize), u8> = BTreeMap::new();
        for tri in triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let count = undirected.entry(key).or_insert(0);
                *count += 1;
                if *count > 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
            }
        }
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut halfedges = Vec::with_capacity(nf * 3 + nf / 4);
        for (f, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let h = 3 * f + k;
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if directed.insert((a, b), h).is_some() {
                    return Err(MeshError::InconsistentOrientation(a.min(b), a.max(b)));
                }
                halfedges.push(HalfEdge {
                    origin: a,
                    twin: INVALID,
                    next: 3 * f + (k + 1) % 3,
                    face: f,
                });
            }
        }

        // Twins, creating border half-edges where the opposite side is open.
        let mut border_out: BTreeMap<usize, usize> = BTreeMap::new();
        for h in 0..3 * nf {
            if halfedges[h].twin != INVALID {
                continue;
            }
            let a = halfedges[h].origin;
            let b = halfedges[halfedges[h].next].origin;
            match directed.get(&(b, a)) {
                Some(&t) => {
                    halfedges[h].twin = t;
                    halfedges[t].twin = h;
                }
                None => {
                    let t = halfedges.len();
                    halfedges.push(HalfEdge {
                        origin: b,
                        twin: h,
                        next: INVALID,
                        face: INVALID,
                    });
                    halfedges[h].twin = t;
                    if border_out.insert(b, t).is_some() {
                        return Err(MeshError::NonManifoldVertex(b));
                    }
                }
            }
        }
        for t in 3 * nf..halfedges.len() {
            let dest = halfedges[halfedges[t].twin].origin;
            halfedges[t].next = border_out[&dest];
        }

        let mut vertex_halfedge = vec![INVALID; nv];
        for (h, he) in halfedges.iter().enumerate() {
            let slot = &mut vertex_halfedge[he.origin];
            if *slot == INVALID || he.face == INVALID {
                *slot = h;
            }
        }
        if let Some(v) = vertex_halfedge.iter().position(|&h| h == INVALID) {
            return Err(MeshError::IsolatedVertex(v));
        }

        let nh = halfedges.len();
        let mesh = HalfEdgeMesh {
            positions,
            halfedges,
            face_halfedge: (0..nf).map(|f| 3 * f).collect(),
            vertex_halfedge,
            live_vertices: nv,
            live_faces: nf,
            live_halfedges: nh,
        };
        mesh.check_fans()?;
        Ok(mesh)
    }

    fn check_fans(&self) -> Result<(), MeshError> {
        let mut out_degree = vec![0usize; self.positions.len()];
        for he in self.halfedges.iter().filter(|he| he.origin != INVALID) {
            out_degree[he.origin] += 1;
        }
        for v in self.vertex_ids() {
            let start = self.vertex_halfedge[v];
            let mut h = start;
            let mut n = 0;
            loop {
                n += 1;
                if n > out_degree[v] {
                    return Err(MeshError::NonManifoldVertex(v));
                }
                h = self.halfedges[self.halfedges[h].twin].next;
                if h == start {
                    break;
                }
            }
            if n != out_degree[v] {
                return Err(MeshError::NonManifoldVertex(v));
            }
        }
        Ok(())
    }

    /// Checks every structural invariant. Valid meshes coming out of
    /// [`HalfEdgeMesh::build`] or any editing sequence always pass.
    pub fn validate(&self) -> Result<(), MeshError> {
        for (h, he) in self.halfedges.iter().enumerate() {
            if he.origin == INVALID {
                continue;
            }
            let t = he.twin;
            if t == h || t >= self.halfedges.len() || self.halfedges[t].twin != h {
                return Err(MeshError::Corrupt(h));
            }
            if self.halfedges[t].origin == INVALID || self.vertex_halfedge[he.origin] == INVALID {
                return Err(MeshError::Corrupt(h));
            }
            if he.face != INVALID {
                let n1 = he.next;
                let n2 = self.halfedges[n1].next;
                if self.halfedges[n2].next != h
                    || self.halfedges[n1].face != he.face
                    || self.halfedges[n2].face != he.face
                    || self.face_halfedge[he.face] == INVALID
                {
                    return Err(MeshError::Corrupt(h));
                }
                let (a, b, c) = (
                    he.origin,
                    self.halfedges[n1].origin,
                    self.halfedges[n2].origin,
                );
                if a == b || b == c || a == c {
                    return Err(MeshError::DegenerateFace(he.face));
                }
            } else if self.halfedges[t].face == INVALID {
                return Err(MeshError::Corrupt(h));
            }
            if self.halfedges[he.next].origin != self.halfedges[t].origin {
                return Err(MeshError::Corrupt(h));
            }
        }
        for f in self.face_ids() {
            let h = self.face_halfedge[f];
            if self.halfedges[h].face != f {
                return Err(MeshError::Corrupt(h));
            }
        }
        for v in self.vertex_ids() {
            let h = self.vertex_halfedge[v];
            if h == INVALID || self.halfedges[h].origin != v {
                return Err(MeshError::Corrupt(h));
            }
        }
        self.check_fans()?;
        // Duplicate edges: two distinct edges joining the same vertex pair.
        let mut seen = BTreeMap::new();
        for h in self.halfedge_ids() {
            let key = (self.halfedges[h].origin, self.dest(h));
            if seen.insert(key, h).is_some() {
                return Err(MeshError::NonManifoldEdge(
                    key.0.min(key.1),
                    key.0.max(key.1),
                ));
            }
        }
        Ok(())
    }

    // ----- element access ---------------------------------------------------

    #[inline]
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    #[inline]
    pub fn positions_mut(&mut self) -> &mut [Vec3] {
        &mut self.positions
    }

    #[inline]
    pub fn position(&self, v: usize) -> Vec3 {
        self.positions[v]
    }

    #[inline]
    pub fn halfedge(&self, h: usize) -> &HalfEdge {
        &self.halfedges[h]
    }

    /// Length of the vertex array, including removed slots (see [`Self::is_compact`]).
    #[inline]
    pub fn vertex_capacity(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn face_capacity(&self) -> usize {
        self.face_halfedge.len()
    }

    #[inline]
    pub fn halfedge_capacity(&self) -> usize {
        self.halfedges.len()
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.live_vertices
    }

    #[inline]
    pub fn num_faces(&self) -> usize {
        self.live_faces
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.live_halfedges / 2
    }

    /// True when no element has been removed since the last rebuild.
    pub fn is_compact(&self) -> bool {
        self.live_vertices == self.positions.len()
            && self.live_faces == self.face_halfedge.len()
            && self.live_halfedges == self.halfedges.len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.positions.len()).filter(move |&v| self.vertex_halfedge[v] != INVALID)
    }

    pub fn face_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.face_halfedge.len()).filter(move |&f| self.face_halfedge[f] != INVALID)
    }

    pub fn halfedge_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.halfedges.len()).filter(move |&h| self.halfedges[h].origin != INVALID)
    }

    /// One representative half-edge per undirected edge (the smaller id).
    pub fn edge_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.halfedge_ids()
            .filter(move |&h| h < self.halfedges[h].twin)
    }

    #[inline]
    pub fn is_vertex_live(&self, v: usize) -> bool {
        v < self.positions.len() && self.vertex_halfedge[v] != INVALID
    }

    #[inline]
    pub fn is_halfedge_live(&self, h: usize) -> bool {
        h < self.halfedges.len() && self.halfedges[h].origin != INVALID
    }

    #[inline]
    pub fn vertex_halfedge(&self, v: usize) -> usize {
        self.vertex_halfedge[v]
    }

    #[inline]
    pub fn face_halfedge(&self, f: usize) -> usize {
        self.face_halfedge[f]
    }

    // ----- navigation -------------------------------------------------------

    #[inline]
    pub fn twin(&self, h: usize) -> usize {
        self.halfedges[h].twin
    }

    #[inline]
    pub fn next(&self, h: usize) -> usize {
        self.halfedges[h].next
    }

    /// Previous half-edge in a triangle (two `next` steps).
    #[inline]
    pub fn prev(&self, h: usize) -> usize {
        self.next(self.next(h))
    }

    #[inline]
    pub fn origin(&self, h: usize) -> usize {
        self.halfedges[h].origin
    }

    #[inline]
    pub fn dest(&self, h: usize) -> usize {
        self.halfedges[self.halfedges[h].twin].origin
    }

    #[inline]
    pub fn face(&self, h: usize) -> usize {
        self.halfedges[h].face
    }

    #[inline]
    pub fn is_border_halfedge(&self, h: usize) -> bool {
        self.halfedges[h].face == INVALID
    }

    #[inline]
    pub fn is_border_edge(&self, h: usize) -> bool {
        self.is_border_halfedge(h) || self.is_border_halfedge(self.twin(h))
    }

    /// A vertex is on the border iff its representative outgoing half-edge is.
    #[inline]
    pub fn is_border_vertex(&self, v: usize) -> bool {
        self.is_border_halfedge(self.vertex_halfedge[v])
    }

    pub fn is_closed(&self) -> bool {
        self.halfedge_ids().all(|h| !self.is_border_halfedge(h))
    }

    /// Outgoing half-edges of `v` in rotational order (border first if any).
    pub fn outgoing(&self, v: usize) -> Outgoing<'_> {
        let start = self.vertex_halfedge[v];
        Outgoing {
            mesh: self,
            start,
            current: start,
            done: false,
        }
    }

    pub fn valence(&self, v: usize) -> usize {
        self.outgoing(v).count()
    }

    /// Vertex ids of face `f`, in winding order starting at its representative.
    #[inline]
    pub fn face_vertices(&self, f: usize) -> [usize; 3] {
        let h = self.face_halfedge[f];
        let n = self.next(h);
        [self.origin(h), self.origin(n), self.origin(self.next(n))]
    }

    #[inline]
    pub fn face_positions(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.face_vertices(f);
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    /// Unnormalized normal `(b - a) × (c - a)`: twice the area times the unit normal.
    #[inline]
    pub fn face_area_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_positions(f);
        (b - a).cross(c - a)
    }

    #[inline]
    pub fn face_normal(&self, f: usize) -> Vec3 {
        self.face_area_normal(f).normalized()
    }

    #[inline]
    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_positions(f);
        triangle_area(a, b, c)
    }

    /// Area-weighted average of incident face normals.
    pub fn vertex_normal(&self, v: usize) -> Vec3 {
        self.outgoing(v)
            .filter(|&h| !self.is_border_halfedge(h))
            .map(|h| self.face_area_normal(self.face(h)))
            .sum::<Vec3>()
            .normalized()
    }

    #[inline]
    pub fn edge_length(&self, h: usize) -> f64 {
        self.positions[self.origin(h)].distance(self.positions[self.dest(h)])
    }

    pub fn mean_edge_length(&self) -> f64 {
        let (sum, n) = self
            .edge_ids()
            .fold((0.0, 0usize), |(s, n), h| (s + self.edge_length(h), n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Half-edge running `u → v`, if the edge exists.
    pub fn find_halfedge(&self, u: usize, v: usize) -> Option<usize> {
        self.outgoing(u).find(|&h| self.dest(h) == v)
    }

    /// Neighbours of `v` in winding order together with the incident faces.
    pub fn one_ring(&self, v: usize) -> OneRing {
        let mut ring = OneRing::default();
        for h in self.outgoing(v) {
            ring.neighbors.push(self.dest(h));
            if !self.is_border_halfedge(h) {
                ring.faces.push(self.face(h));
            }
        }
        ring
    }

    /// Live faces as vertex triples (in face order).
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        self.face_ids().map(|f| self.face_vertices(f)).collect()
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::splat(f64::INFINITY);
        let mut hi = Vec3::splat(f64::NEG_INFINITY);
        for v in self.vertex_ids() {
            lo = lo.min(self.positions[v]);
            hi = hi.max(self.positions[v]);
        }
        (lo, hi)
    }

    /// Replaces all positions at once. Lengths must match the vertex capacity.
    pub fn set_positions(&mut self, positions: &[Vec3]) {
        assert_eq!(
            positions.len(),
            self.positions.len(),
            "position count mismatch"
        );
        self.positions.copy_from_slice(positions);
    }

    pub fn transform_positions(&mut self, mut f: impl FnMut(Vec3) -> Vec3) {
        for p in &mut self.positions {
            *p = f(*p);
        }
    }

    /// Rebuilds the mesh without removed elements. Surviving vertices and
    /// faces keep their relative order, so the result is deterministic.
    pub fn compacted(&self) -> Result<HalfEdgeMesh, MeshError> {
        let mut remap = vec![INVALID; self.positions.len()];
        let mut positions = Vec::with_capacity(self.live_vertices);
        for v in self.vertex_ids() {
            remap[v] = positions.len();
            positions.push(self.positions[v]);
        }
        let triangles: Vec<[usize; 3]> = self
            .face_ids()
            .map(|f| self.face_vertices(f).map(|v| remap[v]))
            .collect();
        HalfEdgeMesh::build(&triangles, positions)
    }

    pub fn topology_summary(&self) -> TopologySummary {
        let v = self.num_vertices();
        let e = self.num_edges();
        let f = self.num_faces();
        let chi = v as i64 + f as i64 - e as i64;
        let is_closed = self.is_closed();
        let num_components = self.count_components();
        let genus = if is_closed && num_components == 1 && chi <= 2 && chi % 2 == 0 {
            Some((1 - chi / 2) as u32)
        } else {
            None
        };
        TopologySummary {
            num_vertices: v,
            num_edges: e,
            num_faces: f,
            num_components,
            euler_characteristic: chi,
            genus,
            is_closed,
            is_orientable: true,
        }
    }

    fn count_components(&self) -> usize {
        let mut seen = vec![false; self.positions.len()];
        let mut stack = Vec::new();
        let mut count = 0;
        for v in self.vertex_ids() {
            if seen[v] {
                continue;
            }
            count += 1;
            seen[v] = true;
            stack.push(v);
            while let Some(u) = stack.pop() {
                for h in self.outgoing(u) {
                    let w = self.dest(h);
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    // ----- local edits --------------------------------------------------------
    //
    // Edits keep every invariant except compactness: removed elements are
    // tombstoned (origin / representative set to INVALID) until `compacted`.

    /// Splits the edge of `h` at `point`, returning the new vertex.
    ///
    /// Each incident triangle is cut in two; works on border edges.
    pub fn split_edge(&mut self, h: usize, point: Vec3) -> usize {
        let h = if self.is_border_halfedge(h) {
            self.twin(h)
        } else {
            h
        };
        let t = self.twin(h);
        let f0 = self.face(h);
        let h1 = self.next(h);
        let h2 = self.next(h1);
        let a = self.origin(h2);

        let m = self.positions.len();
        self.positions.push(point);
        self.vertex_halfedge.push(INVALID);
        self.live_vertices += 1;

        let f2 = self.new_face();
        let n0 = self.new_halfedge(m, f2); // m → v
        let n1 = self.new_halfedge(a, f2); // a → m
        let n2 = self.new_halfedge(m, f0); // m → a
        self.link(n0, h1);
        self.link(h1, n1);
        self.link(n1, n0);
        self.halfedges[h1].face = f2;
        self.link(h, n2);
        self.link(n2, h2);
        self.set_twins(n1, n2);
        self.face_halfedge[f0] = h;
        self.face_halfedge[f2] = n0;

        if self.is_border_halfedge(t) {
            // t: v → m stays on the border, n4: m → u continues the loop.
            let after = self.next(t);
            let n4 = self.new_halfedge(m, INVALID);
            self.link(t, n4);
            self.link(n4, after);
            self.set_twins(h, n4);
            self.set_twins(t, n0);
            self.vertex_halfedge[m] = n4;
        } else {
            let f1 = self.face(t);
            let t1 = self.next(t);
            let t2 = self.next(t1);
            let b = self.origin(t2);
            let f3 = self.new_face();
            let n3 = self.new_halfedge(m, f1); // m → b
            let n4 = self.new_halfedge(m, f3); // m → u
            let n5 = self.new_halfedge(b, f3); // b → m
            self.link(t, n3);
            self.link(n3, t2);
            self.link(n4, t1);
            self.link(t1, n5);
            self.link(n5, n4);
            self.halfedges[t1].face = f3;
            self.set_twins(n3, n5);
            self.set_twins(h, n4);
            self.set_twins(t, n0);
            self.face_halfedge[f1] = t;
            self.face_halfedge[f3] = n4;
            self.vertex_halfedge[m] = n0;
        }
        m
    }

    /// Whether collapsing the interior edge of `h` keeps the surface a
    /// manifold of the same topology (the link condition).
    pub fn collapse_is_legal(&self, h: usize) -> bool {
        if self.is_border_edge(h) {
            return false;
        }
        let t = self.twin(h);
        let u = self.origin(h);
        let v = self.origin(t);
        if self.is_border_vertex(u) || self.is_border_vertex(v) {
            return false;
        }
        let a = self.origin(self.prev(h));
        let b = self.origin(self.prev(t));
        // Vertex link: the only common neighbours are the two opposite vertices.
        for hu in self.outgoing(u) {
            let w = self.dest(hu);
            if w == v || w == a || w == b {
                continue;
            }
            if self.find_halfedge(v, w).is_some() {
                return false;
            }
        }
        // Edge link: (a, b) must not span a triangle with both u and v.
        if let Some(hab) = self.find_halfedge(a, b) {
            let c0 = self.origin(self.prev(hab));
            let c1 = self.origin(self.prev(self.twin(hab)));
            let hits_u = c0 == u || c1 == u;
            let hits_v = c0 == v || c1 == v;
            if hits_u && hits_v {
                return false;
            }
        }
        true
    }

    /// Collapses the edge of `h` (`u → v`) into `u`, placed at `point`.
    /// Removes `v` and the two incident faces. The caller must check
    /// [`Self::collapse_is_legal`] first.
    pub fn collapse_edge(&mut self, h: usize, point: Vec3) -> usize {
        debug_assert!(self.collapse_is_legal(h));
        let t = self.twin(h);
        let u = self.origin(h);
        let v = self.origin(t);
        let h1 = self.next(h);
        let h2 = self.next(h1);
        let t1 = self.next(t);
        let t2 = self.next(t1);
        let a = self.origin(h2);
        let b = self.origin(t2);
        let x1 = self.twin(h1); // a → v
        let x2 = self.twin(h2); // u → a
        let y1 = self.twin(t1); // b → u
        let y2 = self.twin(t2); // v → b

        let v_out: Vec<usize> = self.outgoing(v).collect();
        for hv in v_out {
            self.halfedges[hv].origin = u;
        }
        self.set_twins(x1, x2);
        self.set_twins(y1, y2);

        let (f0, f1) = (self.face(h), self.face(t));
        for dead in [h, h1, h2, t, t1, t2] {
            self.halfedges[dead] = HalfEdge {
                origin: INVALID,
                twin: INVALID,
                next: INVALID,
                face: INVALID,
            };
        }
        self.live_halfedges -= 6;
        self.face_halfedge[f0] = INVALID;
        self.face_halfedge[f1] = INVALID;
        self.live_faces -= 2;
        self.vertex_halfedge[v] = INVALID;
        self.live_vertices -= 1;

        self.vertex_halfedge[u] = x2;
        self.vertex_halfedge[a] = x1;
        self.vertex_halfedge[b] = y1;
        self.positions[u] = point;
        u
    }

    /// Whether the interior edge of `h` can be flipped without creating a
    /// duplicate edge.
    pub fn flip_is_legal(&self, h: usize) -> bool {
        if self.is_border_edge(h) {
            return false;
        }
        let a = self.origin(self.prev(h));
        let b = self.origin(self.prev(self.twin(h)));
        a != b && self.find_halfedge(a, b).is_none()
    }

    /// Replaces edge `u–v` of `h` by the opposite diagonal `a–b`.
    pub fn flip_edge(&mut self, h: usize) {
        debug_assert!(self.flip_is_legal(h));
        let t = self.twin(h);
        let (f0, f1) = (self.face(h), self.face(t));
        let h1 = self.next(h);
        let h2 = self.next(h1);
        let t1 = self.next(t);
        let t2 = self.next(t1);
        let u = self.origin(h);
        let v = self.origin(t);
        let a = self.origin(h2);
        let b = self.origin(t2);

        // f0 = (v, a, b), f1 = (u, b, a)
        self.halfedges[h].origin = a;
        self.halfedges[t].origin = b;
        self.link(h1, h);
        self.link(h, t2);
        self.link(t2, h1);
        self.link(t1, t);
        self.link(t, h2);
        self.link(h2, t1);
        self.halfedges[t2].face = f0;
        self.halfedges[h2].face = f1;
        self.face_halfedge[f0] = h;
        self.face_halfedge[f1] = t;
        self.vertex_halfedge[u] = t1;
        self.vertex_halfedge[v] = h1;
    }

    fn new_face(&mut self) -> usize {
        self.face_halfedge.push(INVALID);
        self.live_faces += 1;
        self.face_halfedge.len() - 1
    }

    fn new_halfedge(&mut self, origin: usize, face: usize) -> usize {
        self.halfedges.push(HalfEdge {
            origin,
            twin: INVALID,
            next: INVALID,
            face,
        });
        self.live_halfedges += 1;
        self.halfedges.len() - 1
    }

    #[inline]
    fn link(&mut self, h: usize, next: usize) {
        self.halfedges[h].next = next;
    }

    #[inline]
    fn set_twins(&mut self, a: usize, b: usize) {
        self.halfedges[a].twin = b;
        self.halfedges[b].twin = a;
    }
}

/// Neighbourhood of a vertex.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OneRing {
    pub neighbors: Vec<usize>,
    pub faces: Vec<usize>,
}

pub struct Outgoing<'a> {
    mesh: &'a HalfEdgeMesh,
    start: usize,
    current: usize,
    done: bool,
}

impl Iterator for Outgoing<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.done {
            return None;
        }
        let h = self.current;
        let m = self.mesh;
        self.current = m.halfedges[m.halfedges[h].twin].next;
        if self.current == self.start {
            self.done = true;
        }
        Some(h)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::primitives::{grid_torus, icosahedron};

    pub(crate) fn tetrahedron() -> HalfEdgeMesh {
        let p = vec![
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(1.0, -1.0, -1.0),
            Vec3::new(-1.0, 1.0, -1.0),
            Vec3::new(-1.0, -1.0, 1.0),
        ];
        let t = [[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]];
        HalfEdgeMesh::build(&t, p).unwrap()
    }

    /// n×n planar grid in the xy-plane with spacing 1, split along one diagonal.
    pub(crate) fn planar_grid(n: usize) -> HalfEdgeMesh {
        let mut p = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                p.push(Vec3::new(i as f64, j as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        HalfEdgeMesh::build(&t, p).unwrap()
    }

    #[test]
    fn tetrahedron_counts() {
        let m = tetrahedron();
        assert_eq!(m.halfedge_capacity(), 12);
        assert_eq!(m.num_edges(), 6);
        let s = m.topology_summary();
        assert_eq!(s.euler_characteristic, 2);
        assert_eq!(s.genus, Some(0));
        for v in m.vertex_ids() {
            assert_eq!(m.one_ring(v).neighbors.len(), 3);
        }
    }

    #[test]
    fn icosahedron_counts_and_valence() {
        let m = icosahedron(1.0);
        let s = m.topology_summary();
        assert_eq!((s.num_vertices, s.num_edges, s.num_faces), (12, 30, 20));
        assert_eq!((s.euler_characteristic, s.genus), (2, Some(0)));
        for v in m.vertex_ids() {
            assert_eq!(m.one_ring(v).neighbors.len(), 5);
            assert_eq!(m.one_ring(v).faces.len(), 5);
        }
    }

    #[test]
    fn grid_torus_topology() {
        let m = grid_torus(16, 16, 1.0, 0.4);
        let s = m.topology_summary();
        assert_eq!((s.euler_characteristic, s.genus), (0, Some(1)));
        for v in m.vertex_ids() {
            assert_eq!(m.valence(v), 6);
        }
    }

    #[test]
    fn same_winding_pair_is_rejected() {
        let p = vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::new(1.0, 1.0, 0.0)];
        let err = HalfEdgeMesh::build(&[[0, 1, 2], [0, 1, 3]], p).unwrap_err();
        assert_eq!(err, MeshError::InconsistentOrientation(0, 1));
    }

    #[test]
    fn construction_errors() {
        let p = vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::Z, Vec3::splat(1.0)];
        assert_eq!(
            HalfEdgeMesh::build(&[[0, 0, 1]], p.clone()).unwrap_err(),
            MeshError::DegenerateFace(0)
        );
        assert!(matches!(
            HalfEdgeMesh::build(&[[0, 1, 9]], p.clone()).unwrap_err(),
            MeshError::IndexOutOfRange { vertex: 9, .. }
        ));
        // Three triangles on edge (0, 1).
        assert_eq!(
            HalfEdgeMesh::build(&[[0, 1, 2], [1, 0, 3], [0, 1, 4]], p.clone()).unwrap_err(),
            MeshError::NonManifoldEdge(0, 1)
        );
        // Two triangles touching only at vertex 0 (a bow tie).
        let p7 = vec![Vec3::ZERO; 5];
        assert_eq!(
            HalfEdgeMesh::build(&[[0, 1, 2], [0, 3, 4]], p7).unwrap_err(),
            MeshError::NonManifoldVertex(0)
        );
        assert_eq!(
            HalfEdgeMesh::build(&[[0, 1, 2]], p).unwrap_err(),
            MeshError::IsolatedVertex(3)
        );
    }

    #[test]
    fn open_grid_has_border() {
        let m = planar_grid(3);
        let s = m.topology_summary();
        assert!(!s.is_closed);
        assert_eq!(s.genus, None);
        assert_eq!(s.euler_characteristic, 1);
        assert!(m.is_border_vertex(0));
        assert!(!m.is_border_vertex(5));
        assert_eq!(m.valence(5), 6);
        m.validate().unwrap();
    }

    #[test]
    fn split_collapse_flip_keep_validity() {
        let mut m = icosahedron(1.0);
        let h = m.edge_ids().next().unwrap();
        let mid = (m.position(m.origin(h)) + m.position(m.dest(h))) * 0.5;
        let nv = m.split_edge(h, mid);
        m.validate().unwrap();
        assert_eq!(m.valence(nv), 4);
        assert_eq!(m.topology_summary().euler_characteristic, 2);

        let hf = m.outgoing(nv).next().unwrap();
        assert!(m.flip_is_legal(hf));
        m.flip_edge(hf);
        m.validate().unwrap();
        assert_eq!(m.valence(nv), 3);

        let hc = m.outgoing(nv).next().unwrap();
        if m.collapse_is_legal(hc) {
            let p = m.position(m.dest(hc));
            m.collapse_edge(hc, p);
            m.validate().unwrap();
        }
        let c = m.compacted().unwrap();
        c.validate().unwrap();
        assert_eq!(c.topology_summary().genus, Some(0));
    }

    #[test]
    fn border_split() {
        let mut m = planar_grid(1);
        let h = m.edge_ids().find(|&h| m.is_border_edge(h)).unwrap();
        let mid = (m.position(m.origin(h)) + m.position(m.dest(h))) * 0.5;
        let nv = m.split_edge(h, mid);
        m.validate().unwrap();
        assert!(m.is_border_vertex(nv));
        assert_eq!(m.num_faces(), 3);
        assert_eq!(m.topology_summary().euler_characteristic, 1);
    }

    #[test]
    fn tetrahedron_collapse_violates_link_condition() {
        let m = tetrahedron();
        for h in m.halfedge_ids() {
            assert!(!m.collapse_is_legal(h));
        }
    }
}
