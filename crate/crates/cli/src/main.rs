use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flatten_core::assets::{
    run_metrics, run_noise, run_render, run_train, run_unwrap, write_obj, InputKind, RenderOptions, RunConfig,
};
use flatten_core::geometry::primitives::{icosphere, open_cylinder, planar_grid};
use flatten_core::model::{AblationMode, Architecture, Reduction};

/// Neural free-boundary surface parameterization.
///
/// The worker count for parallel kernels is read from FLATTEN_THREADS
/// (default: all cores). Results do not depend on it.
#[derive(Parser, Debug)]
#[command(name = "flatten", version, about, long_about)]
struct Cli {
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true, env = "FLATTEN_THREADS")]
    threads: Option<usize>,

    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info", env = "FLATTEN_LOG")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, normalize, train, parameterize every vertex, extract seams, score and export.
    Train(TrainArgs),
    /// Train under an ablation mode.
    Ablate {
        #[command(flatten)]
        run: TrainArgs,
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Train on noisy copies of a mesh and score each against the clean mesh.
    Noise {
        #[command(flatten)]
        run: TrainArgs,
        /// Noise standard deviations as fractions of the bounding-box diagonal.
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.04")]
        levels: Vec<f64>,
    },
    /// Apply a trained checkpoint to new points.
    Unwrap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        output: PathBuf,
    },
    /// Conformality and overlap metrics of an OBJ with per-vertex UV.
    Metrics {
        #[arg(long)]
        input: PathBuf,
        /// Print JSON instead of a tab-separated table.
        #[arg(long)]
        json: bool,
    },
    /// Draw the UV layout of an OBJ with UV to PNG or SVG (by extension).
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// File with one seam vertex index per line.
        #[arg(long)]
        seams: Option<PathBuf>,
        #[arg(long, default_value_t = 1024)]
        image_size: u32,
    },
    /// Write a procedural test surface as OBJ.
    Generate {
        #[arg(long, value_enum)]
        shape: Shape,
        #[arg(long)]
        output: PathBuf,
        /// Vertices per side (plane, cylinder) or subdivision level (sphere).
        #[arg(long)]
        resolution: Option<usize>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Full,
    NoBranchA,
    NoBranchB,
    NoCutNet,
}

impl From<Mode> for AblationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => AblationMode::Full,
            Mode::NoBranchA => AblationMode::NoBranchA,
            Mode::NoBranchB => AblationMode::NoBranchB,
            Mode::NoCutNet => AblationMode::NoCutNet,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Kind {
    Auto,
    Mesh,
    PointCloud,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Shape {
    Plane,
    Cylinder,
    Sphere,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Mesh (.obj, .ply with faces) or point cloud (.xyz, .ply).
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Points per iteration (a perfect square).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Hidden width of every sub-network (default architecture when unset).
    #[arg(long)]
    hidden: Option<usize>,
    /// Latent width of the embedding networks, used with --hidden.
    #[arg(long, default_value_t = 64)]
    latent: usize,
    #[arg(long)]
    k_unwrap: Option<usize>,
    #[arg(long)]
    k_cut: Option<usize>,
    #[arg(long, value_enum)]
    reduction: Option<ReductionArg>,
    /// Run every iteration instead of stopping on a loss plateau.
    #[arg(long)]
    no_early_stop: bool,
    /// Skip normal supervision even when the input has normals.
    #[arg(long)]
    no_normals: bool,
    #[arg(long)]
    image_size: Option<u32>,
    /// Checker cell size in UV units.
    #[arg(long)]
    checker_period: Option<f64>,
}

impl TrainArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(i) = &self.input {
            cfg.input = i.clone();
        }
        if cfg.input.as_os_str().is_empty() {
            bail!("no input given (use --input or a config file)");
        }
        if let Some(k) = self.kind {
            cfg.kind = match k {
                Kind::Auto => InputKind::Auto,
                Kind::Mesh => InputKind::Mesh,
                Kind::PointCloud => InputKind::PointCloud,
            };
        }
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        let t = &mut cfg.train;
        if let Some(s) = self.seed {
            t.seed = s;
        }
        if let Some(n) = self.iters {
            t.iterations = n;
        }
        if let Some(n) = self.points {
            t.n_points = n;
        }
        if let Some(lr) = self.lr {
            t.adam.lr = lr;
        }
        if let Some(h) = self.hidden {
            t.architecture = Architecture::scaled(h, self.latent);
        }
        if let Some(k) = self.k_unwrap {
            t.k_unwrap = k;
        }
        if let Some(k) = self.k_cut {
            t.k_cut = k;
        }
        if let Some(r) = self.reduction {
            t.reduction = match r {
                ReductionArg::Mean => Reduction::Mean,
                ReductionArg::Sum => Reduction::Sum,
            };
        }
        if self.no_early_stop {
            t.early_stop = None;
        }
        if self.no_normals {
            t.use_normals = false;
        }
        if let Some(s) = self.image_size {
            cfg.render.image_size = s;
        }
        if self.checker_period.is_some() {
            cfg.render.checker_period = self.checker_period;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    match cli.command {
        Command::Train(args) => train(args.to_config()?),
        Command::Ablate { run, mode } => {
            let mut cfg = run.to_config()?;
            cfg.train.ablation = mode.into();
            train(cfg)
        }
        Command::Noise { run, levels } => {
            let mut cfg = run.to_config()?;
            cfg.noise_levels = levels;
            let runs = run_noise(&cfg)?;
            print!("{}", flatten_core::metrics::noise_table(&runs));
            Ok(())
        }
        Command::Unwrap { checkpoint, input, output } => {
            let (uv, seams) = run_unwrap(&checkpoint, &input, &output)?;
            println!("{} points parameterized, {} seam points, written to {}", uv.len(), seams.len(), output.display());
            Ok(())
        }
        Command::Metrics { input, json } => {
            let r = run_metrics(&input)?;
            if json {
                println!("{}", r.to_json());
            } else {
                print!("{}", r.to_tsv());
            }
            Ok(())
        }
        Command::Render { input, output, seams, image_size } => {
            let opts = RenderOptions { size: image_size, ..RenderOptions::default() };
            run_render(&input, seams.as_deref(), &output, &opts)?;
            Ok(())
        }
        Command::Generate { shape, output, resolution } => {
            let mesh = match shape {
                Shape::Plane => {
                    let n = resolution.unwrap_or(50);
                    planar_grid(n, n, 2.0, 2.0)
                }
                Shape::Cylinder => {
                    let n = resolution.unwrap_or(50);
                    open_cylinder(n, n, 1.0, 2.0)
                }
                Shape::Sphere => icosphere(resolution.unwrap_or(4)),
            };
            write_obj(&mesh, &output)?;
            Ok(())
        }
    }
}

fn train(cfg: RunConfig) -> Result<()> {
    let summary = run_train(&cfg)?;
    if let Some(r) = &summary.report {
        print!("{}", r.to_tsv());
    }
    println!(
        "{} iterations, {} seam points, outputs in {}",
        summary.history.len(),
        summary.seams.len(),
        summary.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
