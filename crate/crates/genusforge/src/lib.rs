//! File formats, configuration and run orchestration around
//! [`genusforge_core`].
//!
//! Targets live on disk as a view set (16-bit PNGs plus `manifest.json`,
//! see [`views`]); a reconstruction only sees those images, and the
//! ground-truth mesh is touched again only for evaluation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod pipeline;
pub mod views;

pub use config::{ConfigError, RunConfig};
pub use pipeline::PipelineError;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GENUSFORGE_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`]. Unset or empty leaves
/// the default (one worker per core). Returns the value that was applied.
#[cfg(feature = "parallel")]
pub fn configure_threads() -> Result<Option<usize>, String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    if raw.trim().is_empty() {
        return Ok(None);
    }
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    Ok(Some(n))
}

/// Without the `parallel` feature everything runs on the calling thread.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads() -> Result<Option<usize>, String> {
    Ok(None)
}
