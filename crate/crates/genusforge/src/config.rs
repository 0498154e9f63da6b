//! Run configuration. A TOML file with fixed sections; every key has a
//! default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use genusforge_core::metrics::EvalParams;
use genusforge_core::optimize::{AdamParams, ReconstructParams};
use genusforge_core::primitives::PrimitiveSpec;
use genusforge_core::remesh::{RemeshMode, RemeshParams};
use genusforge_core::render::RenderParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Iteration budget for genus 0 and 1 when `budget.iterations` is 0.
pub const LOW_GENUS_ITERATIONS: usize = 1500;
/// Iteration budget for genus 2 and above when `budget.iterations` is 0.
pub const HIGH_GENUS_ITERATIONS: usize = 3000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub target: TargetSection,
    pub init: InitSection,
    pub render: RenderSection,
    pub remesh: RemeshSection,
    pub optimizer: OptimizerSection,
    pub budget: BudgetSection,
    pub eval: EvalSection,
}

/// Where targets come from. An empty path means "not given".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Ground-truth OBJ; rendered into targets when `views` is empty, and
    /// used for evaluation after reconstruction.
    pub mesh: PathBuf,
    /// Directory holding a view set written by `make-targets`.
    pub views: PathBuf,
    /// Rescale the ground truth to unit bounding radius before rendering.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub genus: u32,
    pub resolution: usize,
    pub scale: f64,
    /// Optional OBJ used instead of the primitive.
    pub mesh: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub fov_y_degrees: f64,
    pub radius: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemeshSection {
    pub enabled: bool,
    pub tolerance: f64,
    pub min_edge: f64,
    pub max_edge: f64,
    pub mean_edge_factor: f64,
    pub curvature_floor: f64,
    pub target_valence: usize,
    pub smoothing: f64,
    pub passes: usize,
    pub period_min: usize,
    pub period_max: usize,
    /// Mode of the standalone `remesh` subcommand: "coarsen" or "refine".
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub w1: f64,
    pub w2: f64,
    pub plateau_tolerance: f64,
    /// 0 disables plateau stopping.
    pub plateau_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// 0 picks the genus-dependent default.
    pub iterations: usize,
    /// Write an OBJ snapshot every this many iterations; 0 disables.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub samples: usize,
    pub resolution: usize,
    pub icp_iterations: usize,
    pub icp_samples: usize,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            mesh: PathBuf::new(),
            views: PathBuf::new(),
            normalize: true,
        }
    }
}

impl Default for InitSection {
    fn default() -> Self {
        let p = PrimitiveSpec::default();
        InitSection {
            genus: p.genus,
            resolution: p.resolution,
            scale: p.scale,
            mesh: PathBuf::new(),
        }
    }
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            views: 36,
            width: 128,
            height: 128,
            fov_y_degrees: genusforge_core::render::DEFAULT_FOV_Y.to_degrees(),
            radius: genusforge_core::render::DEFAULT_RIG_RADIUS,
            sigma: RenderParams::default().sigma,
        }
    }
}

impl Default for RemeshSection {
    fn default() -> Self {
        let r = RemeshParams::default();
        RemeshSection {
            enabled: true,
            tolerance: r.tolerance,
            min_edge: r.min_edge,
            max_edge: r.max_edge,
            mean_edge_factor: r.mean_edge_factor,
            curvature_floor: r.curvature_floor,
            target_valence: r.target_valence,
            smoothing: r.smoothing,
            passes: r.passes,
            period_min: r.period.0,
            period_max: r.period.1,
            mode: "refine".into(),
        }
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let r = ReconstructParams::default();
        OptimizerSection {
            alpha: r.adam.alpha,
            beta1: r.adam.beta1,
            beta2: r.adam.beta2,
            epsilon: r.adam.epsilon,
            lambda: r.adam.lambda,
            w1: r.w1,
            w2: r.w2,
            plateau_tolerance: r.plateau_tolerance,
            plateau_window: r.plateau_window,
        }
    }
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection {
            iterations: 0,
            snapshot_every: 100,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalParams::default();
        EvalSection {
            samples: e.samples,
            resolution: e.resolution,
            icp_iterations: e.icp_iterations,
            icp_samples: e.icp_samples,
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    /// Applies a `genus=<g>,res=<n>,scale=<s>` override to `[init]`; any
    /// subset of the keys may be given.
    pub fn apply_init_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| invalid("--init", format!("expected key=value, found {item:?}")))?;
            let bad = |_| invalid("--init", format!("cannot parse {key}={value:?}"));
            match key.trim() {
                "genus" => {
                    self.init.genus = value
                        .trim()
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "res" => {
                    self.init.resolution = value
                        .trim()
                        .parse()
                        .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                "scale" => {
                    self.init.scale = value
                        .trim()
                        .parse()
                        .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                other => return Err(invalid("--init", format!("unknown key {other:?}"))),
            }
        }
        self.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// Checks the values that the core types do not check themselves.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.render;
        if r.views == 0 {
            return Err(invalid("render.views", "must be at least 1"));
        }
        if r.width == 0 || r.height == 0 {
            return Err(invalid("render.width", "image dimensions must be positive"));
        }
        if !(r.sigma > 0.0 && r.sigma.is_finite()) {
            return Err(invalid("render.sigma", "must be positive"));
        }
        if !(r.radius > 0.0 && r.radius.is_finite()) {
            return Err(invalid("render.radius", "must be positive"));
        }
        self.remesh_mode()?;
        self.remesh_params()
            .validate()
            .map_err(|e| invalid("remesh", e.to_string()))?;
        let o = &self.optimizer;
        if !(o.w1 >= 0.0 && o.w2 >= 0.0) {
            return Err(invalid("optimizer.w1", "weights must be non-negative"));
        }
        if !(o.lambda >= 0.0) {
            return Err(invalid("optimizer.lambda", "must be non-negative"));
        }
        if !(o.alpha > 0.0) {
            return Err(invalid("optimizer.alpha", "must be positive"));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(invalid("optimizer.beta1", "Adam betas must lie in [0, 1)"));
        }
        if self.eval.samples == 0 || self.eval.icp_samples == 0 || self.eval.resolution == 0 {
            return Err(invalid(
                "eval.samples",
                "sample counts and resolution must be positive",
            ));
        }
        Ok(())
    }

    pub fn primitive_spec(&self) -> PrimitiveSpec {
        PrimitiveSpec {
            genus: self.init.genus,
            resolution: self.init.resolution,
            scale: self.init.scale,
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            sigma: self.render.sigma,
        }
    }

    pub fn remesh_params(&self) -> RemeshParams {
        let r = &self.remesh;
        RemeshParams {
            tolerance: r.tolerance,
            min_edge: r.min_edge,
            max_edge: r.max_edge,
            mean_edge_factor: r.mean_edge_factor,
            curvature_floor: r.curvature_floor,
            target_valence: r.target_valence,
            smoothing: r.smoothing,
            passes: r.passes,
            period: (r.period_min, r.period_max),
        }
    }

    pub fn remesh_mode(&self) -> Result<RemeshMode, ConfigError> {
        match self.remesh.mode.as_str() {
            "coarsen" => Ok(RemeshMode::Coarsen),
            "refine" => Ok(RemeshMode::Refine),
            other => Err(invalid(
                "remesh.mode",
                format!("expected \"coarsen\" or \"refine\", got {other:?}"),
            )),
        }
    }

    /// The iteration budget for a run starting from genus `genus`.
    pub fn iterations(&self, genus: u32) -> usize {
        match self.budget.iterations {
            0 if genus <= 1 => LOW_GENUS_ITERATIONS,
            0 => HIGH_GENUS_ITERATIONS,
            n => n,
        }
    }

    pub fn reconstruct_params(&self, genus: u32) -> ReconstructParams {
        let o = &self.optimizer;
        ReconstructParams {
            iterations: self.iterations(genus),
            adam: AdamParams {
                alpha: o.alpha,
                beta1: o.beta1,
                beta2: o.beta2,
                epsilon: o.epsilon,
                lambda: o.lambda,
            },
            w1: o.w1,
            w2: o.w2,
            render: self.render_params(),
            remesh: self.remesh_params(),
            remesh_enabled: self.remesh.enabled,
            plateau_tolerance: o.plateau_tolerance,
            plateau_window: o.plateau_window,
            seed: self.seed,
        }
    }

    pub fn eval_params(&self) -> EvalParams {
        EvalParams {
            samples: self.eval.samples,
            resolution: self.eval.resolution,
            icp_iterations: self.eval.icp_iterations,
            icp_samples: self.eval.icp_samples,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn init_override_sets_listed_keys_only() {
        let mut cfg = RunConfig::default();
        cfg.apply_init_override("genus=3, res=12").unwrap();
        assert_eq!((cfg.init.genus, cfg.init.resolution), (3, 12));
        assert_eq!(cfg.init.scale, RunConfig::default().init.scale);
        assert!(cfg.apply_init_override("holes=2").is_err());
        assert!(cfg.apply_init_override("genus").is_err());
        assert!(cfg.apply_init_override("scale=big").is_err());
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = RunConfig::parse("[optimizer]\nalpah = 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("alpah"), "{err}");
        let err = RunConfig::parse("[optimiser]\nalpha = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("optimiser"), "{err}");
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::parse("seed = 7\n[render]\nwidth = 64\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.render.width, 64);
        assert_eq!(cfg.render.height, 128);
        assert_eq!(cfg.reconstruct_params(1).seed, 7);
    }

    #[test]
    fn budget_depends_on_genus_only_when_unset() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.iterations(0), LOW_GENUS_ITERATIONS);
        assert_eq!(cfg.iterations(1), LOW_GENUS_ITERATIONS);
        assert_eq!(cfg.iterations(3), HIGH_GENUS_ITERATIONS);
        cfg.budget.iterations = 600;
        assert_eq!(cfg.iterations(3), 600);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::parse("[remesh]\nmode = \"sideways\"\n").is_err());
        assert!(RunConfig::parse("[optimizer]\nw2 = -1.0\n").is_err());
        assert!(RunConfig::parse("[remesh]\nperiod_min = 300\n").is_err());
        assert!(RunConfig::parse("[render]\nviews = 0\n").is_err());
    }
}
