use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use meshseed::cloud::PointCloud;
use meshseed::delaunay::io::{read_mesh, write_medit, write_vtk, CellField};
use meshseed::phantom::{sidecar_path, ProjectionSet};
use meshseed::pipeline::{
    read_edge_maps, run_pipeline, stage_edges, stage_eval, stage_mesh, stage_project, stage_recon, stage_seed,
    write_edge_maps, write_json, write_seed_outputs, OutputTracker, PhantomSource, PipelineConfig,
};
use meshseed::{Error, ErrorKind, Result};

#[derive(Debug, Parser)]
#[command(name = "meshseed", version, about = "Content-adapted tetrahedral meshes from cone-beam edge backprojection")]
struct Cli {
    /// JSON configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "MESHSEED_THREADS")]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for randomized steps.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Built-in phantom name.
    #[arg(long, global = true)]
    phantom: Option<String>,

    /// Significance level of the per-slice threshold.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// SART sweeps.
    #[arg(long, global = true)]
    sweeps: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the phantom and write its description.
    Phantom,
    /// Simulate projections.
    Project,
    /// Extract edge maps from projections.
    Edges {
        /// Concatenated projection file or per-view directory.
        #[arg(long)]
        projections: PathBuf,
    },
    /// Backproject edges, threshold and extract the point cloud.
    Seed {
        /// Directory of edge maps with its geometry sidecar.
        #[arg(long)]
        edges: PathBuf,
    },
    /// Tetrahedralize a point cloud.
    Mesh {
        /// Point cloud as whitespace-separated x y z lines.
        #[arg(long)]
        cloud: PathBuf,
    },
    /// Score a cloud against the phantom and a mesh against the grid.
    Eval {
        #[arg(long)]
        cloud: PathBuf,
        /// Mesh in VTK or Medit format.
        #[arg(long)]
        mesh: PathBuf,
    },
    /// Reconstruct per-cell attenuation on a mesh.
    Recon {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        projections: PathBuf,
    },
    /// Run every stage end to end.
    Pipeline,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(out) = &o.out {
        cfg.output_dir = std::path::absolute(out).map_err(|e| Error::io(out, e))?;
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &o.phantom {
        cfg.phantom = PhantomSource::Builtin(name.clone());
    }
    if let Some(alpha) = o.alpha {
        cfg.filter.alpha_limit = Some(alpha);
    }
    if let Some(sweeps) = o.sweeps {
        cfg.recon.sweeps = sweeps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
    }
    Ok(())
}

/// Runs one stage, removing whatever it wrote if it fails. An empty cloud
/// keeps its outputs so the diagnostic can be inspected.
fn with_tracker(out: &Path, f: impl FnOnce(&Path, &mut OutputTracker) -> Result<()>) -> Result<()> {
    let mut tracker = OutputTracker::default();
    let result = tracker.ensure_dir(out).and_then(|_| f(out, &mut tracker));
    if let Err(e) = &result {
        if !matches!(e.root(), Error::EmptyCloud(_)) {
            tracker.remove_all();
        }
    }
    result
}

fn run(cli: &Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let cfg = load_config(cli)?;
    let out = cfg.resolve(&cfg.output_dir);
    match &cli.command {
        Command::Phantom => with_tracker(&out, |out, t| {
            let phantom = cfg.load_phantom()?;
            let p = out.join("phantom.json");
            write_json(&p, &phantom.description())?;
            t.add(p);
            Ok(())
        }),
        Command::Project => with_tracker(&out, |out, t| {
            let geom = cfg.geometry.build()?;
            let proj = stage_project(&cfg.load_phantom()?, &geom)?;
            let raw = out.join("projections.f32");
            t.add(raw.clone());
            t.add(sidecar_path(&raw));
            proj.write_concatenated(&raw)
        }),
        Command::Edges { projections } => with_tracker(&out, |out, t| {
            let proj = ProjectionSet::read(projections)?;
            let maps = stage_edges(&proj, &cfg.canny)?;
            let dir = out.join("edges");
            t.ensure_dir(&dir)?;
            t.extend(write_edge_maps(&dir, &maps, &proj.geometry)?);
            Ok(())
        }),
        Command::Seed { edges } => with_tracker(&out, |out, t| {
            let (maps, geom) = read_edge_maps(edges)?;
            let grid = cfg.grid.build()?;
            let seed = stage_seed(&maps, &geom, &grid, &cfg.filter, &cfg.cloud)?;
            t.extend(write_seed_outputs(out, &seed)?);
            if seed.is_empty() {
                let diag = out.join("diagnostic.json");
                return Err(Error::EmptyCloud(format!("see {}", diag.display())));
            }
            info!("cloud: {} points", seed.cloud.len());
            Ok(())
        }),
        Command::Mesh { cloud } => with_tracker(&out, |out, t| {
            let cloud = PointCloud::read_xyz(cloud)?;
            let mesh = stage_mesh(&cloud, cfg.seed)?;
            let (vtk, medit) = (out.join("mesh.vtk"), out.join("mesh.mesh"));
            t.extend([vtk.clone(), medit.clone()]);
            write_vtk(&vtk, &mesh, &[])?;
            write_medit(&medit, &mesh)
        }),
        Command::Eval { cloud, mesh } => with_tracker(&out, |out, t| {
            let cloud = PointCloud::read_xyz(cloud)?;
            let (mesh, _) = read_mesh(mesh)?;
            let grid = cfg.grid.build()?;
            let report = stage_eval(&cloud, &mesh, &cfg.load_phantom()?, &grid)?;
            let (q, csv, hist) = (out.join("quality.json"), out.join("distances.csv"), out.join("distances_hist.dat"));
            t.extend([q.clone(), csv.clone(), hist.clone()]);
            write_json(&q, &report)?;
            report.quality.write_csv(&csv, &cloud)?;
            report.quality.write_histogram(&hist)
        }),
        Command::Recon { mesh, projections } => with_tracker(&out, |out, t| {
            let (mesh, _) = read_mesh(mesh)?;
            let proj = ProjectionSet::read(projections)?;
            let result = stage_recon(&mesh, &proj, &cfg.recon.sart())?;
            let vtk = out.join("recon.vtk");
            t.add(vtk.clone());
            let touched = result.touched.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            write_vtk(
                &vtk,
                &mesh,
                &[
                    CellField { name: "attenuation".into(), values: result.values.clone() },
                    CellField { name: "touched".into(), values: touched },
                ],
            )?;
            if !result.residuals.is_empty() {
                let csv = out.join("residuals.csv");
                t.add(csv.clone());
                result.write_residual_csv(&csv)?;
            }
            Ok(())
        }),
        Command::Pipeline => {
            let manifest = run_pipeline(&cfg)?;
            let text = serde_json::to_string_pretty(&manifest.summary)?;
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meshseed: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

