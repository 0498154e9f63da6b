//! Subcommand implementations over files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use genusforge_core::curvature::{CurvatureError, CurvatureField};
use genusforge_core::metrics::{evaluate, EvalParams, EvalReport, MetricsError};
use genusforge_core::obj::{format_coordinate, parse_obj, write_obj, ObjError};
use genusforge_core::optimize::{
    reconstruct, render_views, Observer, OptimizeError, RemeshRecord, ReportRow,
};
use genusforge_core::primitives::{make_primitive, PrimitiveError};
use genusforge_core::remesh::{remesh_event, RemeshError, RemeshOutcome};
use genusforge_core::render::{make_camera_rig, RenderError};
use genusforge_core::{HalfEdgeMesh, TopologySummary};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::views::{read_view_set, write_view_set, Manifest, ViewSetError};

pub const LOSS_CSV_HEADER: &str = "iter,loss_render,loss_smooth,loss_invert,num_vertices,genus";
pub const CURVATURE_CSV_HEADER: &str = "vid,K,H,k1,k2";
pub const EVAL_CSV_HEADER: &str = "chamfer,iou,samples,resolution";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Obj { path: PathBuf, source: ObjError },
    #[error("{0} is not a closed mesh")]
    NotClosed(PathBuf),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ViewSet(#[from] ViewSetError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Remesh(#[from] RemeshError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    /// Name of the innermost error variant, e.g. `DegenerateProjection`.
    pub fn name(&self) -> String {
        match self {
            PipelineError::Io { .. } => "IoError".into(),
            PipelineError::Obj { source, .. } => innermost_variant(&format!("{source:?}")),
            PipelineError::ViewSet(ViewSetError::Io { .. }) => "IoError".into(),
            other => innermost_variant(&format!("{other:?}")),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

/// Follows `Outer(Inner(...))` chains in a `Debug` rendering.
fn innermost_variant(debug: &str) -> String {
    let mut rest = debug;
    loop {
        let end = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        let ident = &rest[..end];
        let tail = &rest[end..];
        match tail.strip_prefix('(') {
            Some(inner) if inner.starts_with(|c: char| c.is_ascii_uppercase()) => rest = inner,
            _ => return ident.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_set(p: &Path) -> bool {
    !p.as_os_str().is_empty()
}

pub fn load_mesh(path: &Path) -> Result<HalfEdgeMesh, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_obj(&text).map_err(|source| PipelineError::Obj {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_mesh(path: &Path, mesh: &HalfEdgeMesh) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| is_set(p)) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, write_obj(mesh)).map_err(io_err(path))
}

fn load_closed(path: &Path) -> Result<HalfEdgeMesh, PipelineError> {
    let mesh = load_mesh(path)?;
    if !mesh.is_closed() {
        return Err(PipelineError::NotClosed(path.to_path_buf()));
    }
    Ok(mesh)
}

fn ground_truth(cfg: &RunConfig, path: &Path) -> Result<HalfEdgeMesh, PipelineError> {
    let mesh = load_closed(path)?;
    Ok(if cfg.target.normalize {
        genusforge_core::metrics::normalize_unit(&mesh)
    } else {
        mesh
    })
}

/// Renders the ground truth from the configured rig into `out`.
pub fn make_targets(
    cfg: &RunConfig,
    gt_path: &Path,
    out: &Path,
) -> Result<Manifest, PipelineError> {
    let gt = ground_truth(cfg, gt_path)?;
    let r = &cfg.render;
    let cameras = make_camera_rig(
        r.views,
        r.radius,
        r.width,
        r.height,
        r.fov_y_degrees.to_radians(),
    );
    let views = render_views(&gt, &cameras, &cfg.render_params())?;
    let source = gt_path
        .file_name()
        .map_or(String::new(), |n| n.to_string_lossy().into_owned());
    Ok(write_view_set(
        out, &cameras, &views, r.sigma, cfg.seed, &source,
    )?)
}

fn csv_genus(g: Option<u32>) -> String {
    g.map_or_else(|| "NA".into(), |g| g.to_string())
}

pub fn loss_csv_row(r: &ReportRow) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.iter,
        r.loss_render,
        r.loss_smooth,
        r.loss_invert,
        r.num_vertices,
        csv_genus(r.genus)
    )
}

/// Streams the loss CSV, the event log and periodic snapshots.
struct RunRecorder {
    loss: BufWriter<File>,
    log: BufWriter<File>,
    snapshots: PathBuf,
    snapshot_every: usize,
    error: Option<PipelineError>,
}

impl RunRecorder {
    fn keep(&mut self, r: Result<(), PipelineError>) {
        if let (Err(e), None) = (r, &self.error) {
            self.error = Some(e);
        }
    }
}

impl Observer for RunRecorder {
    fn on_iteration(&mut self, row: &ReportRow, mesh: &HalfEdgeMesh) {
        let line = loss_csv_row(row);
        let r = writeln!(self.loss, "{line}").map_err(io_err(Path::new("loss.csv")));
        self.keep(r);
        if self.snapshot_every > 0 && row.iter.is_multiple_of(self.snapshot_every) {
            let path = self.snapshots.join(format!("iter_{:05}.obj", row.iter));
            let r = save_mesh(&path, mesh);
            self.keep(r);
        }
    }

    fn on_remesh(&mut self, record: &RemeshRecord, _mesh: &HalfEdgeMesh) {
        let rep = &record.report;
        let r = writeln!(
            self.log,
            "iter {} remesh {:?}: splits {} collapses {} flips {} vertices {}",
            record.iter, record.mode, rep.splits, rep.collapses, rep.flips, record.num_vertices
        )
        .map_err(io_err(Path::new("run.log")));
        self.keep(r);
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mesh: HalfEdgeMesh,
    pub history: Vec<ReportRow>,
    pub remesh_events: Vec<RemeshRecord>,
    pub stopped_on_plateau: bool,
    pub eval: Option<EvalReport>,
    pub out: PathBuf,
}

fn absolute(p: &Path) -> PathBuf {
    if is_set(p) {
        std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
    } else {
        p.to_path_buf()
    }
}

/// Runs a reconstruction and writes the run directory:
/// `config.toml`, `loss.csv`, `run.log`, `snapshots/`, `final.obj`, and
/// `eval.csv` when a ground-truth mesh is configured. Targets rendered from
/// a ground-truth mesh are written to `targets/` and read back from disk.
pub fn reconstruct_run(cfg: &RunConfig, out: &Path) -> Result<RunSummary, PipelineError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut copy = cfg.clone();
    copy.target.mesh = absolute(&cfg.target.mesh);
    copy.target.views = absolute(&cfg.target.views);
    copy.init.mesh = absolute(&cfg.init.mesh);

    let views_dir = if is_set(&cfg.target.views) {
        cfg.target.views.clone()
    } else if is_set(&cfg.target.mesh) {
        let dir = out.join("targets");
        make_targets(cfg, &cfg.target.mesh, &dir)?;
        dir
    } else {
        return Err(PipelineError::MissingInput("target.views or target.mesh"));
    };
    let (_, cameras, targets) = read_view_set(&views_dir)?;

    let init = if is_set(&cfg.init.mesh) {
        load_closed(&cfg.init.mesh)?
    } else {
        make_primitive(&cfg.primitive_spec())?
    };
    let genus = init.topology_summary().genus.unwrap_or(cfg.init.genus);
    let params = cfg.reconstruct_params(genus);
    copy.budget.iterations = params.iterations;
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, copy.to_toml()).map_err(io_err(&config_path))?;

    let create = |name: &str| -> Result<BufWriter<File>, PipelineError> {
        let path = out.join(name);
        Ok(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
    };
    let mut recorder = RunRecorder {
        loss: create("loss.csv")?,
        log: create("run.log")?,
        snapshots: out.join("snapshots"),
        snapshot_every: cfg.budget.snapshot_every,
        error: None,
    };
    writeln!(recorder.loss, "{LOSS_CSV_HEADER}").map_err(io_err(&out.join("loss.csv")))?;
    let outcome = reconstruct(&init, cameras, targets, &params, &mut recorder)?;
    if outcome.stopped_on_plateau {
        let last = outcome.history.last().map_or(0, |r| r.iter);
        let r = writeln!(recorder.log, "stopped on loss plateau at iter {last}")
            .map_err(io_err(&out.join("run.log")));
        recorder.keep(r);
    }
    if let Some(e) = recorder.error.take() {
        return Err(e);
    }
    recorder
        .loss
        .flush()
        .map_err(io_err(&out.join("loss.csv")))?;
    recorder.log.flush().map_err(io_err(&out.join("run.log")))?;
    save_mesh(&out.join("final.obj"), &outcome.mesh)?;

    let eval = if is_set(&cfg.target.mesh) {
        let gt = ground_truth(cfg, &cfg.target.mesh)?;
        let params = cfg.eval_params();
        let report = evaluate(&outcome.mesh, &gt, &params)?;
        let path = out.join("eval.csv");
        std::fs::write(&path, format_eval(&report, &params)).map_err(io_err(&path))?;
        Some(report)
    } else {
        None
    };
    Ok(RunSummary {
        mesh: outcome.mesh,
        history: outcome.history,
        remesh_events: outcome.remesh_events,
        stopped_on_plateau: outcome.stopped_on_plateau,
        eval,
        out: out.to_path_buf(),
    })
}

/// Metric conventions as `#` comment lines, then the CSV header and one row.
pub fn format_eval(report: &EvalReport, params: &EvalParams) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# normalization: each mesh centred on its bounding box and scaled to unit bounding radius"
    );
    let _ = writeln!(
        s,
        "# alignment: point-to-point ICP of prediction onto reference, {} iterations, {} samples",
        params.icp_iterations, params.icp_samples
    );
    let _ = writeln!(
        s,
        "# chamfer: symmetric mean point-to-surface distance (not squared), {} area-weighted samples per mesh",
        params.samples
    );
    let _ = writeln!(
        s,
        "# iou: voxel occupancy at {}^3 over the joint bounding box",
        params.resolution
    );
    let _ = writeln!(s, "# seed: {}", params.seed);
    let _ = writeln!(s, "{EVAL_CSV_HEADER}");
    let _ = writeln!(
        s,
        "{},{},{},{}",
        report.chamfer, report.iou, report.samples, report.resolution
    );
    s
}

pub fn evaluate_files(
    cfg: &RunConfig,
    predicted: &Path,
    reference: &Path,
) -> Result<EvalReport, PipelineError> {
    let pred = load_closed(predicted)?;
    let refm = load_closed(reference)?;
    Ok(evaluate(&pred, &refm, &cfg.eval_params())?)
}

/// One standalone remesh event in the configured mode.
pub fn remesh_file(
    cfg: &RunConfig,
    input: &Path,
    output: &Path,
) -> Result<RemeshOutcome, PipelineError> {
    let mesh = load_closed(input)?;
    let params = cfg.remesh_params();
    params.validate()?;
    let curvature = CurvatureField::compute(&mesh)?;
    let outcome = remesh_event(&mesh, &curvature, &params, cfg.remesh_mode()?)?;
    save_mesh(output, &outcome.mesh)?;
    Ok(outcome)
}

pub fn curvature_csv(mesh: &HalfEdgeMesh) -> Result<String, PipelineError> {
    let field = CurvatureField::compute(mesh)?;
    let mut s = String::new();
    let _ = writeln!(s, "{CURVATURE_CSV_HEADER}");
    for v in mesh.vertex_ids() {
        let _ = writeln!(
            s,
            "{v},{},{},{},{}",
            format_coordinate(field.gaussian[v]),
            format_coordinate(field.mean[v]),
            format_coordinate(field.k1[v]),
            format_coordinate(field.k2[v])
        );
    }
    Ok(s)
}

pub fn format_summary(t: &TopologySummary) -> String {
    format!(
        "vertices {}\nedges {}\nfaces {}\ncomponents {}\neuler_characteristic {}\ngenus {}\nclosed {}\norientable {}\n",
        t.num_vertices,
        t.num_edges,
        t.num_faces,
        t.num_components,
        t.euler_characteristic,
        csv_genus(t.genus),
        t.is_closed,
        t.is_orientable
    )
}

/// Topology summary text and, for closed meshes, the curvature CSV.
pub fn inspect(path: &Path) -> Result<(TopologySummary, Option<String>), PipelineError> {
    let mesh = load_mesh(path)?;
    let summary = mesh.topology_summary();
    let csv = if mesh.is_closed() {
        Some(curvature_csv(&mesh)?)
    } else {
        None
    };
    Ok((summary, csv))
}
