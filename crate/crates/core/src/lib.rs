//! Topology-preserving multi-view reconstruction of high-genus triangle meshes.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Everything here is a pure computation over in-memory meshes and
//! images; file formats, configuration and the command line live in the
//! `genusforge` companion crate.
//!
//! Pipeline: a [`primitives`] surface whose genus matches the target is
//! optimized against rendered views ([`render`]) by reparametrized Adam
//! ([`optimize`]), interleaved with curvature-adaptive remeshing
//! ([`remesh`]) that never changes topology. [`metrics`] scores the result.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod curvature;
pub mod geometry;
pub mod invariants;
pub mod mesh;
pub mod metrics;
pub mod obj;
pub mod optimize;
pub mod primitives;
pub mod remesh;
pub mod render;
pub mod sparse;

pub use geometry::{Mat3, RigidTransform, Vec3};
pub use mesh::{HalfEdgeMesh, MeshError, TopologySummary};
