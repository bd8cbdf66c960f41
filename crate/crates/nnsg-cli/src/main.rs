//! Command-line front end for the guidance pipeline: synthetic
//! fixtures, prototype database build/search, guidance extraction,
//! rendering, and metrics.
//!
//! Exit codes: 0 success, 2 validation or parse failure, 3 I/O
//! failure, 4 degenerate data (an empty render).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "nnsg",
    version,
    about = "Nearest-neighbor 3D structure guidance for face enhancement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic fixture: basis, attribute table,
    /// per-face parameter files, and a query face.
    Fixture(FixtureArgs),
    /// Build or search the aesthetic-prototype database.
    #[command(subcommand)]
    Db(DbCommand),
    /// Search the database for the nearest prototype and write the
    /// depth/contour/mask guidance bundle.
    Guide(GuideArgs),
    /// Render a parameter file to color/coverage/depth images.
    Render(RenderArgs),
    /// Report id-similarity, PSNR, and SSIM for image and/or
    /// parameter-file pairs.
    Metrics(MetricsArgs),
}

#[derive(Subcommand)]
enum DbCommand {
    /// Parse an attribute table, filter prototypes, ingest their
    /// parameter files, and write the database.
    Build(DbBuildArgs),
    /// Print the top-k nearest prototypes for a query face.
    Search(DbSearchArgs),
}

#[derive(Args)]
struct FixtureArgs {
    /// Directory to create the fixture in.
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed for all generated content.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of faces (attribute rows + parameter files).
    #[arg(long, default_value_t = 40)]
    faces: usize,
    /// Vertex grid side of the synthetic basis (vertices = grid^2).
    #[arg(long, default_value_t = 32)]
    grid: usize,
}

#[derive(Args)]
struct DbBuildArgs {
    /// CelebA-style attribute file.
    #[arg(long)]
    attrs: PathBuf,
    /// Directory of per-face parameter files named <stem>.json.
    #[arg(long)]
    params_dir: PathBuf,
    /// Output database path.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated attributes that must be +1
    /// (default: Attractive,Young; pass "" for none).
    #[arg(long)]
    include: Option<String>,
    /// Comma-separated attributes that must be -1
    /// (default: the curation removal list; pass "" for none).
    #[arg(long)]
    exclude: Option<String>,
}

#[derive(Args)]
struct DbSearchArgs {
    /// Database path.
    #[arg(long)]
    db: PathBuf,
    /// Query parameter file.
    #[arg(long)]
    query: PathBuf,
    /// Number of results.
    #[arg(short, long, default_value_t = 1)]
    k: usize,
}

#[derive(Args)]
struct CameraArgs {
    /// Focal length in pixels (default: 1015 scaled from 224 to the
    /// output size).
    #[arg(long)]
    focal: Option<f64>,
    /// Near plane in model units.
    #[arg(long, default_value_t = 0.1)]
    near: f64,
    /// Far plane in model units.
    #[arg(long, default_value_t = 100.0)]
    far: f64,
}

#[derive(Args)]
struct GuideArgs {
    /// Input face parameter file.
    #[arg(long)]
    input: PathBuf,
    /// Prototype database path.
    #[arg(long)]
    db: PathBuf,
    /// Morphable basis file.
    #[arg(long)]
    basis: PathBuf,
    /// Output directory for depth.png, contour.png, mask.png,
    /// manifest.txt.
    #[arg(long)]
    out_dir: PathBuf,
    /// Output image side in pixels.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Weight on the input identity.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Weight on the reference identity.
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    /// Contour guidance weight recorded in the manifest.
    #[arg(long, default_value_t = 0.3)]
    omega: f64,
    /// Depth guidance weight recorded in the manifest.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Mask dilation in pixels (default: 8 scaled by size/512).
    #[arg(long)]
    dilation: Option<usize>,
    /// Canny Gaussian sigma.
    #[arg(long, default_value_t = 1.4)]
    sigma: f64,
    /// Canny low threshold as a fraction of the max gradient.
    #[arg(long, default_value_t = 0.1)]
    low: f64,
    /// Canny high threshold as a fraction of the max gradient.
    #[arg(long, default_value_t = 0.2)]
    high: f64,
    /// Encode depth with near = dark instead of near = bright.
    #[arg(long)]
    near_dark: bool,
    /// Shade the render with the input face's lighting first.
    #[arg(long)]
    shaded: bool,
    /// Free-form prompt text recorded in the manifest.
    #[arg(long)]
    prompt: Option<String>,
    #[command(flatten)]
    camera: CameraArgs,
}

#[derive(Args)]
struct RenderArgs {
    /// Parameter file to render.
    #[arg(long)]
    params: PathBuf,
    /// Morphable basis file.
    #[arg(long)]
    basis: PathBuf,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
    /// Output image side in pixels.
    #[arg(long, default_value_t = 512)]
    size: usize,
    /// Apply the file's spherical-harmonics lighting.
    #[arg(long)]
    lit: bool,
    /// Also write the mesh as mesh.obj.
    #[arg(long)]
    obj: bool,
    #[command(flatten)]
    camera: CameraArgs,
}

#[derive(Args)]
struct MetricsArgs {
    /// First image (PNG).
    #[arg(long)]
    image_a: Option<PathBuf>,
    /// Second image (PNG).
    #[arg(long)]
    image_b: Option<PathBuf>,
    /// Bilinearly resize image B to image A's size if they differ.
    #[arg(long)]
    resize: bool,
    /// First parameter file.
    #[arg(long)]
    params_a: Option<PathBuf>,
    /// Second parameter file.
    #[arg(long)]
    params_b: Option<PathBuf>,
}

fn exit_class(err: &nnsg::Error) -> u8 {
    match err {
        nnsg::Error::Io { .. } | nnsg::Error::Image(_) => 3,
        nnsg::Error::EmptyRender => 4,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), String> {
    match std::env::var("NNSG_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .ok()
                .filter(|n| *n >= 1)
                .ok_or_else(|| format!("NNSG_THREADS must be a positive integer, got {raw:?}"))?;
            // Capping workers never changes outputs, only wall time.
            nnsg::parallel::configure_thread_cap(n)
                .map_err(|e| format!("failed to configure thread pool: {e}"))
        }
    }
}

fn main() -> ExitCode {
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fixture(args) => commands::run_fixture(args),
        Command::Db(DbCommand::Build(args)) => commands::run_db_build(args),
        Command::Db(DbCommand::Search(args)) => commands::run_db_search(args),
        Command::Guide(args) => commands::run_guide(args),
        Command::Render(args) => commands::run_render(args),
        Command::Metrics(args) => commands::run_metrics(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}
