use std::path::Path;
use std::process::{Command, Output};

use genusforge::pipeline::load_mesh;
use genusforge::views::read_manifest;
use genusforge::RunConfig;
use genusforge_core::obj::write_obj;
use genusforge_core::primitives::{grid_torus, icosphere};

fn genusforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genusforge"))
        .args(args)
        .env("GENUSFORGE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn dump_config_prints_parseable_defaults() {
    let o = genusforge(&["--dump-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(RunConfig::parse(&stdout(&o)).unwrap(), RunConfig::default());
}

#[test]
fn dump_config_reflects_file_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    write(&cfg, "[render]\nviews = 4\n");
    let o = genusforge(&["--config", p(&cfg), "--seed", "42", "--dump-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let back = RunConfig::parse(&stdout(&o)).unwrap();
    assert_eq!((back.render.views, back.seed), (4, 42));
}

#[test]
fn init_flag_overrides_the_primitive() {
    let o = genusforge(&["--init", "genus=2,res=10", "--dump-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let back = RunConfig::parse(&stdout(&o)).unwrap();
    assert_eq!((back.init.genus, back.init.resolution), (2, 10));
    let o = genusforge(&["--init", "holes=2", "--dump-config"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "[optimizer]\nlearning_rate = 0.1\n");
    let o = genusforge(&["--config", p(&cfg), "reconstruct"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn evaluate_identical_meshes_gives_zero_distance_and_full_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.obj");
    write(&a, &write_obj(&grid_torus(24, 12, 0.7, 0.3)));
    let cfg = dir.path().join("fast.toml");
    write(
        &cfg,
        "[eval]\nsamples = 5000\nicp_samples = 1000\nresolution = 48\n",
    );
    let o = genusforge(&["--config", p(&cfg), "evaluate", p(&a), p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "chamfer,iou,samples,resolution");
    assert_eq!(rows.len(), 2);
    let fields: Vec<f64> = rows[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert!(fields[0] < 1e-6, "chamfer {}", fields[0]);
    assert_eq!(fields[1], 1.0);
    assert!(text.contains("# chamfer:"));
}

#[test]
fn make_targets_writes_two_images_per_view_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("sphere.obj");
    write(&mesh, &write_obj(&icosphere(3, 1.0)));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = genusforge(&["--seed", "5", "--out", p(out), "make-targets", p(&mesh)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let pngs = std::fs::read_dir(&a)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png")
        })
        .count();
    assert_eq!(pngs, 72);
    let manifest = read_manifest(&a).unwrap();
    assert_eq!(manifest.views.len(), 36);
    assert_eq!(
        (manifest.width, manifest.height, manifest.seed),
        (128, 128, 5)
    );
    for entry in std::fs::read_dir(&a).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn camera_inside_the_mesh_exits_1_with_the_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("sphere.obj");
    write(&mesh, &write_obj(&icosphere(1, 1.0)));
    let cfg = dir.path().join("close.toml");
    write(&cfg, "[render]\nradius = 0.5\nviews = 2\n");
    let o = genusforge(&[
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("t")),
        "make-targets",
        p(&mesh),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("DegenerateProjection"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn reconstruct_without_targets_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = genusforge(&["--out", p(&dir.path().join("run")), "reconstruct"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MissingInput"), "{}", stderr(&o));
}

#[test]
fn inspect_reports_genus_and_writes_curvature_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("torus.obj");
    write(&mesh, &write_obj(&grid_torus(16, 8, 0.7, 0.3)));
    let out = dir.path().join("inspect");
    let o = genusforge(&["--out", p(&out), "inspect", p(&mesh)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("genus 1\n"));
    assert!(stdout(&o).contains("euler_characteristic 0\n"));
    let csv = std::fs::read_to_string(out.join("curvature.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("vid,K,H,k1,k2"));
    assert_eq!(lines.count(), 16 * 8);
}

#[test]
fn remesh_subcommand_keeps_genus() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("torus.obj");
    write(&input, &write_obj(&grid_torus(32, 16, 0.7, 0.3)));
    let cfg = dir.path().join("coarsen.toml");
    write(&cfg, "[remesh]\nmode = \"coarsen\"\ntolerance = 0.02\n");
    let output = dir.path().join("out.obj");
    let o = genusforge(&[
        "--config",
        p(&cfg),
        "--out",
        p(&output),
        "remesh",
        p(&input),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mesh = load_mesh(&output).unwrap();
    assert_eq!(mesh.topology_summary().genus, Some(1));
    assert!(mesh.num_vertices() < 32 * 16);
}

#[test]
fn small_reconstruction_writes_a_reproducible_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("torus.obj");
    write(&gt, &write_obj(&grid_torus(32, 16, 0.8, 0.2)));
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &format!(
            "seed = 3\n[target]\nmesh = {:?}\n[render]\nviews = 6\nwidth = 32\nheight = 32\n\
             [init]\nresolution = 8\n[remesh]\nperiod_min = 10\nperiod_max = 15\n\
             [budget]\niterations = 40\nsnapshot_every = 20\n\
             [eval]\nsamples = 2000\nicp_samples = 500\nresolution = 32\n",
            p(&gt)
        ),
    );
    let run = dir.path().join("run");
    let o = genusforge(&["--config", p(&cfg), "--out", p(&run), "reconstruct"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in [
        "config.toml",
        "loss.csv",
        "run.log",
        "final.obj",
        "eval.csv",
        "targets/manifest.json",
    ] {
        assert!(run.join(name).is_file(), "missing {name}");
    }
    for iter in [0, 20, 40] {
        assert!(run.join(format!("snapshots/iter_{iter:05}.obj")).is_file());
    }
    let loss = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(loss.starts_with("iter,loss_render,loss_smooth,loss_invert,num_vertices,genus\n"));
    assert_eq!(loss.lines().count(), 1 + 41);
    assert_eq!(
        load_mesh(&run.join("final.obj"))
            .unwrap()
            .topology_summary()
            .genus,
        Some(1)
    );
    assert!(!std::fs::read_to_string(run.join("run.log"))
        .unwrap()
        .is_empty());

    // The copied config alone reproduces the run.
    let again = dir.path().join("again");
    let o = genusforge(&[
        "--config",
        p(&run.join("config.toml")),
        "--out",
        p(&again),
        "reconstruct",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["loss.csv", "final.obj", "eval.csv"] {
        assert_eq!(
            std::fs::read(run.join(name)).unwrap(),
            std::fs::read(again.join(name)).unwrap(),
            "{name} differs"
        );
    }
}
