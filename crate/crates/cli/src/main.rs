use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use psr_gmti::formats::{self, Stored};
use psr_gmti::harness::{benchmark_scaling, render_image, ExperimentConfig};
use psr_gmti::psr::{moving_image, DEFAULT_DETECTION_DB};
use psr_gmti::solvers::{Solver, ThresholdConvention};
use psr_gmti::{run_experiment, GradientMode};

#[derive(Parser)]
#[command(name = "psr-gmti", version, about = "SAR moving-target imaging by phase-space reflectivity recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run(Box<RunArgs>),
    /// Time solver iterations over a list of problem sizes.
    Bench(BenchArgs),
    /// Render a stored matrix or measurement file as a log-scale PGM.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Pgd,
    Fista,
    Admm,
    Nonconvex,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Pgd => Solver::Pgd,
            SolverArg::Fista => Solver::Fista,
            SolverArg::Admm => Solver::Admm,
            SolverArg::Nonconvex => Solver::Nonconvex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Approximate,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Inverse,
    Standard,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    realizations: Option<usize>,
    #[command(flatten)]
    solver_args: SolverFlags,
}

/// Overrides for individual solver settings.
#[derive(Args, Default)]
struct SolverFlags {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum)]
    gradient_mode: Option<ModeArg>,
    /// Cardinality for the nonconvex solver.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    armijo_beta: Option<f64>,
    #[arg(long)]
    armijo_c: Option<f64>,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long, value_enum)]
    threshold_convention: Option<ConventionArg>,
    #[arg(long)]
    check_every: Option<usize>,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long)]
    cg_max_iters: Option<usize>,
}

impl SolverFlags {
    fn apply(&self, cfg: &mut psr_gmti::SolverConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(lambda, r, t0, delta, max_iters, armijo_beta, armijo_c, alpha_min, check_every, cg_tol, cg_max_iters);
        if self.alpha0.is_some() {
            cfg.alpha0 = self.alpha0;
        }
        if self.k.is_some() {
            cfg.k_cardinality = self.k;
        }
        if let Some(m) = self.gradient_mode {
            cfg.gradient_mode = match m {
                ModeArg::Approximate => GradientMode::Approximate,
                ModeArg::Exact => GradientMode::Exact,
            };
        }
        if let Some(c) = self.threshold_convention {
            cfg.threshold_convention = match c {
                ConventionArg::Inverse => ThresholdConvention::Inverse,
                ConventionArg::Standard => ThresholdConvention::Standard,
            };
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated `MxN` sizes, e.g. `49x2025,49x8100,49x16129`.
    sizes: String,
    /// Iterations per solver and size; the median is reported.
    #[arg(long, default_value_t = 30)]
    iters: usize,
    /// Write the timing CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    /// The whole array, one image row per matrix row.
    Matrix,
    /// Per-pixel sum over the moving rows.
    Moving,
    /// The zero-velocity row.
    Stationary,
}

#[derive(Args)]
struct RenderArgs {
    /// Binary (`PSRD`) or CSV matrix, or a binary measurement file.
    input: PathBuf,
    /// Output image; defaults to the input path with a `.pgm` extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DETECTION_DB, allow_negative_numbers = true)]
    floor_db: f64,
    #[arg(long, value_enum, default_value_t = View::Matrix)]
    view: View,
    /// Image width for the pixel views; a square image when omitted.
    #[arg(long)]
    nx: Option<usize>,
    /// Row holding stationary scatterers, for the pixel views; the middle
    /// row when omitted.
    #[arg(long)]
    stationary_row: Option<usize>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(args) => run(*args),
        Command::Bench(args) => bench(args),
        Command::Render(args) => render(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(s) = args.solver {
        cfg.solver.name = s.into();
    }
    if let Some(out) = args.out {
        cfg.output.directory = out;
    }
    if let Some(n) = args.realizations {
        cfg.sweep.realizations = n;
    }
    args.solver_args.apply(&mut cfg.solver.config);
    let record = run_experiment(&cfg)?;
    print!("{}", record.metrics_csv());
    info!("outputs in {}", cfg.output.directory.display());
    Ok(())
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|s| {
            let (m, n) = s
                .trim()
                .split_once(['x', 'X'])
                .with_context(|| format!("size '{s}' is not of the form MxN"))?;
            Ok((m.trim().parse()?, n.trim().parse()?))
        })
        .collect()
}

fn bench(args: BenchArgs) -> Result<()> {
    let sizes = parse_sizes(&args.sizes)?;
    let report = benchmark_scaling(&sizes, args.iters)?;
    match args.out {
        Some(path) => fs::write(&path, report.csv())?,
        None => print!("{}", report.csv()),
    }
    for (solver, slope) in &report.slopes {
        info!("{solver}: log-log slope {slope:.3}");
    }
    Ok(())
}

fn load_matrix(path: &Path) -> Result<Stored> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(b"PSRD") {
        return Ok(formats::decode_binary(&bytes)?);
    }
    let text = String::from_utf8(bytes).context("input is neither PSRD nor text CSV")?;
    Ok(Stored::Matrix(formats::parse_matrix_csv(&text)?))
}

fn render(args: RenderArgs) -> Result<()> {
    let (values, width, height) = match load_matrix(&args.input)? {
        Stored::Measurements(d) => {
            if !matches!(args.view, View::Matrix) {
                warn!("measurements have no pixel view; rendering |d| as slow time x frequency");
            }
            (d.data().iter().map(|z| z.norm()).collect(), d.n_freq(), d.n_slow())
        }
        Stored::Matrix(q) => {
            let (m, n) = q.dim();
            if q.iter().any(|&v| v < 0.0) {
                bail!("matrix has negative entries");
            }
            let nu_s = args.stationary_row.unwrap_or(m / 2);
            if nu_s >= m {
                bail!("stationary row {nu_s} out of range for {m} rows");
            }
            let image = match args.view {
                View::Matrix => q.iter().copied().collect(),
                View::Stationary => q.row(nu_s).to_vec(),
                View::Moving => {
                    let mut moving = q.clone();
                    moving.row_mut(nu_s).fill(0.0);
                    moving_image(&psr_gmti::PsrMatrix::new(moving)?)
                }
            };
            match args.view {
                View::Matrix => (image, n, m),
                _ => {
                    let nx = match args.nx {
                        Some(nx) => nx,
                        None => {
                            let side = (n as f64).sqrt().round() as usize;
                            if side * side != n {
                                bail!("{n} pixels is not a square; pass --nx");
                            }
                            side
                        }
                    };
                    if nx == 0 || n % nx != 0 {
                        bail!("--nx {nx} does not divide {n} pixels");
                    }
                    (image, nx, n / nx)
                }
            }
        }
    };
    let pixels = render_image(&values, args.floor_db)?;
    let out = args.out.unwrap_or_else(|| args.input.with_extension("pgm"));
    formats::write_pgm(&out, width, height, &pixels)?;
    info!("wrote {width} x {height} image to {}", out.display());
    Ok(())
}
