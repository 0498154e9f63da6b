//! Whole-mesh invariant checks shared by the pipeline stages and the tests.

use alloc::format;
use alloc::string::String;
use core::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crate::curvature::gauss_bonnet_residual;
use crate::mesh::HalfEdgeMesh;

/// Tolerance on `|Σ deficit − 2πχ|`, per face.
pub const GAUSS_BONNET_TOL_PER_FACE: f64 = 1e-8;

static CHECKS: AtomicUsize = AtomicUsize::new(0);
static WORST_BITS: AtomicU64 = AtomicU64::new(0);

/// Number of [`assert_pipeline_mesh`] calls so far in this process.
pub fn checks_performed() -> usize {
    CHECKS.load(Ordering::Relaxed)
}

/// Largest `|Σ deficit − 2πχ| / |F|` seen by [`assert_pipeline_mesh`].
pub fn worst_residual_per_face() -> f64 {
    f64::from_bits(WORST_BITS.load(Ordering::Relaxed))
}

/// Structural validity, `2|E| = 3|F|` and discrete Gauss–Bonnet for a closed mesh.
pub fn check_closed_mesh(mesh: &HalfEdgeMesh) -> Result<(), String> {
    mesh.validate().map_err(|e| format!("invalid mesh: {e}"))?;
    if !mesh.is_closed() {
        return Err(String::from("mesh has a border"));
    }
    if 2 * mesh.num_edges() != 3 * mesh.num_faces() {
        return Err(format!(
            "2|E| = {} but 3|F| = {}",
            2 * mesh.num_edges(),
            3 * mesh.num_faces()
        ));
    }
    let residual = gauss_bonnet_residual(mesh).map_err(|e| format!("{e}"))?;
    // Non-negative floats order like their bit patterns.
    WORST_BITS.fetch_max(
        (residual.abs() / mesh.num_faces() as f64).to_bits(),
        Ordering::Relaxed,
    );
    let tol = GAUSS_BONNET_TOL_PER_FACE * mesh.num_faces() as f64;
    if !(residual.abs() < tol) {
        return Err(format!(
            "Gauss-Bonnet residual {residual:e} exceeds {tol:e}"
        ));
    }
    Ok(())
}

/// Panics if a mesh leaving pipeline stage `stage` breaks [`check_closed_mesh`].
#[track_caller]
pub fn assert_pipeline_mesh(mesh: &HalfEdgeMesh, stage: &str) {
    CHECKS.fetch_add(1, Ordering::Relaxed);
    if let Err(e) = check_closed_mesh(mesh) {
        panic!("{stage}: {e}");
    }
}
