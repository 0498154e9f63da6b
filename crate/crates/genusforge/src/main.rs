use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genusforge::pipeline::{
    evaluate_files, format_eval, format_summary, inspect, make_targets, reconstruct_run,
    remesh_file,
};
use genusforge::{configure_threads, PipelineError, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "genusforge",
    version,
    about = "Genus-preserving multi-view mesh reconstruction"
)]
struct Cli {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `[init]`, e.g. `genus=2,res=16,scale=1`.
    #[arg(long, global = true, value_name = "genus=<g>,res=<n>,scale=<s>")]
    init: Option<String>,
    /// Output directory (or file, for `remesh`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a ground-truth OBJ into a view set.
    MakeTargets {
        /// Defaults to `target.mesh` from the config.
        mesh: Option<PathBuf>,
    },
    /// Reconstruct a mesh from the configured targets.
    Reconstruct,
    /// Compare two OBJ files; prints conventions and one CSV row.
    Evaluate {
        predicted: PathBuf,
        reference: PathBuf,
    },
    /// Apply one remesh event (mode from `remesh.mode`) to an OBJ.
    Remesh { mesh: PathBuf },
    /// Print the topology summary; writes `curvature.csv` under `--out` if given.
    Inspect { mesh: PathBuf },
}

enum Failure {
    Config(String),
    Pipeline(PipelineError),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Pipeline(e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(spec) = &cli.init {
        cfg.apply_init_override(spec)
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|source| {
        Failure::Pipeline(PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Failure::Config("no subcommand given (see --help)".into()));
    };
    configure_threads().map_err(Failure::Config)?;
    match command {
        Command::MakeTargets { mesh } => {
            let mesh = mesh.clone().unwrap_or_else(|| cfg.target.mesh.clone());
            if mesh.as_os_str().is_empty() {
                return Err(Failure::Config(
                    "make-targets needs a mesh argument or target.mesh".into(),
                ));
            }
            let out = out_dir(cli, "targets");
            let manifest = make_targets(&cfg, &mesh, &out)?;
            println!(
                "wrote {} views at {}x{} to {}",
                manifest.views.len(),
                manifest.width,
                manifest.height,
                out.display()
            );
        }
        Command::Reconstruct => {
            let out = out_dir(cli, "run");
            let summary = reconstruct_run(&cfg, &out)?;
            let last = summary.history.last();
            println!(
                "iterations {} remesh_events {} vertices {} genus {}",
                last.map_or(0, |r| r.iter),
                summary.remesh_events.len(),
                summary.mesh.num_vertices(),
                summary
                    .mesh
                    .topology_summary()
                    .genus
                    .map_or("NA".into(), |g| g.to_string())
            );
            if let Some(e) = &summary.eval {
                println!("chamfer {} iou {}", e.chamfer, e.iou);
            }
        }
        Command::Evaluate {
            predicted,
            reference,
        } => {
            let report = evaluate_files(&cfg, predicted, reference)?;
            print!("{}", format_eval(&report, &cfg.eval_params()));
        }
        Command::Remesh { mesh } => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("remeshed.obj"));
            let outcome = remesh_file(&cfg, mesh, &out)?;
            let r = outcome.report;
            println!(
                "splits {} collapses {} flips {} vertices {}",
                r.splits,
                r.collapses,
                r.flips,
                outcome.mesh.num_vertices()
            );
        }
        Command::Inspect { mesh } => {
            let (summary, csv) = inspect(mesh)?;
            print!("{}", format_summary(&summary));
            if let (Some(dir), Some(csv)) = (&cli.out, csv) {
                std::fs::create_dir_all(dir).map_err(|source| {
                    Failure::Pipeline(PipelineError::Io {
                        path: dir.clone(),
                        source,
                    })
                })?;
                write_file(&dir.join("curvature.csv"), &csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(1)
        }
    }
}
