//! `dpc`: density-peaks clustering from the command line.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors (including a
//! missing input file), 1 for anything that fails at run time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpc_core::data::{self, GaussianSpec, VectorFormat};
use dpc_core::dependent::DEFAULT_THRESHOLD;
use dpc_core::vamana::{StartMode, DEFAULT_ALPHA};
use dpc_core::{
    eval, reapply_policies, run_pipeline, CenterPolicy, Clustering, DensityKind, DoublingParams,
    IndexConfig, NoisePolicy, PipelineConfig, PointSet, StageTimings, VamanaParams,
};

/// Every random choice (graph insertion order, start points, generated data)
/// derives from this unless `--seed` is given.
const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(name = "dpc", version, about = "Parallel density-peaks clustering")]
struct Cli {
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the clustering pipeline.
    Cluster(RunArgs),
    /// Exact clustering: brute-force kNN and exhaustive dependent-point search.
    Exact(RunArgs),
    /// Compare two label files.
    Score(ScoreArgs),
    /// Generate a Gaussian-mixture dataset.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IndexKind {
    Vamana,
    Bruteforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CenterKind {
    Threshold,
    Product,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StartKind {
    Random,
    Medoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Fvecs,
    F32bin,
}

impl From<FormatArg> for VectorFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Fvecs => VectorFormat::Fvecs,
            FormatArg::F32bin => VectorFormat::F32Bin,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Input vectors (.fvecs, or .fbin/.f32bin/.bin for f32bin).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Overrides the format implied by the input extension.
    #[arg(long)]
    format: Option<FormatArg>,
    /// Ignored by `exact`, which always uses brute force.
    #[arg(long, value_enum, default_value_t = IndexKind::Vamana)]
    index: IndexKind,
    /// Neighbors per point used for densities.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Query beam width.
    #[arg(long = "L", default_value_t = 32)]
    l: usize,
    /// Beam width while building the graph.
    #[arg(long = "L-build", default_value_t = 32)]
    l_build: usize,
    /// First neighbor count of the dependent-point doubling search.
    #[arg(long = "Ld", default_value_t = 32)]
    l_d: usize,
    /// Graph degree bound.
    #[arg(long = "R", default_value_t = 32)]
    r: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Start points for graph search; defaults to ceil(sqrt(n)).
    #[arg(long)]
    num_starts: Option<usize>,
    #[arg(long, value_enum, default_value_t = StartKind::Random)]
    start: StartKind,
    /// Unresolved points below which doubling stops and an exact scan finishes.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: usize,
    /// kth, normalized, exp-sum, sum-exp or sum.
    #[arg(long, default_value = "kth")]
    density: DensityKind,
    #[arg(long, value_enum, default_value_t = CenterKind::Local)]
    center: CenterKind,
    /// Minimum dependent distance of a center (`--center threshold`).
    #[arg(long)]
    delta_min: Option<f64>,
    /// Number of centers (`--center product`).
    #[arg(long)]
    n_c: Option<usize>,
    /// Points with density strictly below this are noise.
    #[arg(long, default_value_t = 0.0)]
    rho_min: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Where to write one label per line.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write `<output>.meta` listing centers and noise.
    #[arg(long, requires = "output")]
    sidecar: bool,
    /// Reference labels; enables ari, homogeneity and completeness output.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Save densities, dependent points and neighbor lists here.
    #[arg(long)]
    state_dump: Option<PathBuf>,
    /// Skip the index: re-select noise and centers over a saved state.
    #[arg(long, conflicts_with_all = ["input", "state_dump"])]
    from_state: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Predicted labels.
    #[arg(long)]
    pred: PathBuf,
    /// Reference labels.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 128)]
    d: usize,
    /// Number of clusters.
    #[arg(long)]
    c: usize,
    /// Per-coordinate variance.
    #[arg(long, default_value_t = 0.05)]
    variance: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Vector file to write; format follows the extension unless `--format` is set.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    format: Option<FormatArg>,
    /// Label file; defaults to `<output>.labels`.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<dpc_core::Error> for Failure {
    fn from(e: dpc_core::Error) -> Self {
        match e {
            dpc_core::Error::InvalidArgument(_) | dpc_core::Error::IndexOutOfRange { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn resolve_format(path: &Path, explicit: Option<FormatArg>) -> Result<VectorFormat, Failure> {
    explicit
        .map(VectorFormat::from)
        .or_else(|| VectorFormat::from_path(path))
        .ok_or_else(|| {
            usage(format!(
                "cannot infer vector format of {}; pass --format",
                path.display()
            ))
        })
}

fn center_policy(args: &RunArgs) -> Result<CenterPolicy, Failure> {
    match args.center {
        CenterKind::Threshold => args
            .delta_min
            .map(|delta_min| CenterPolicy::Threshold { delta_min })
            .ok_or_else(|| usage("--center threshold needs --delta-min")),
        CenterKind::Product => args
            .n_c
            .map(|n_c| CenterPolicy::Product { n_c })
            .ok_or_else(|| usage("--center product needs --n-c")),
        CenterKind::Local => Ok(CenterPolicy::Local),
    }
}

fn pipeline_config(args: &RunArgs, exact: bool) -> Result<PipelineConfig, Failure> {
    let index = if exact || args.index == IndexKind::Bruteforce {
        IndexConfig::BruteForce
    } else {
        IndexConfig::Vamana {
            params: VamanaParams {
                degree_bound: args.r,
                build_beam: args.l_build,
                alpha: args.alpha,
                num_starts: args.num_starts,
                start_mode: match args.start {
                    StartKind::Random => StartMode::Random,
                    StartKind::Medoid => StartMode::Medoid,
                },
                seed: args.seed,
            },
            beam_width: args.l,
        }
    };
    if args.alpha.is_nan() || args.alpha < 1.0 {
        return Err(usage(format!("--alpha must be >= 1, got {}", args.alpha)));
    }
    let doubling = if exact {
        DoublingParams::exhaustive(args.k)
    } else {
        DoublingParams::new(args.l_d, args.threshold)
    };
    let config = PipelineConfig {
        index,
        k: args.k,
        density: args.density,
        center: center_policy(args)?,
        noise: NoisePolicy::new(args.rho_min),
        doubling,
    };
    config.validate()?;
    Ok(config)
}

fn print_timings(t: &StageTimings) {
    let total = t.total().as_secs_f64();
    for (name, d) in t.stages() {
        let s = d.as_secs_f64();
        let pct = if total > 0.0 { 100.0 * s / total } else { 0.0 };
        println!("time_{name}_s={s:.6}");
        println!("time_{name}_pct={pct:.2}");
    }
    println!("time_total_s={total:.6}");
}

fn print_scores(pred: &[i64], truth: &[i64]) -> CmdResult {
    if pred.len() != truth.len() {
        return Err(usage(format!(
            "label counts differ: {} predicted vs {} reference",
            pred.len(),
            truth.len()
        )));
    }
    let ari = eval::ari(pred, truth)?;
    let (h, c) = eval::homogeneity_completeness(pred, truth)?;
    println!("ari={ari}");
    println!("homogeneity={h}");
    println!("completeness={c}");
    Ok(())
}

fn report(clustering: &Clustering, args: &RunArgs) -> CmdResult {
    println!("n={}", clustering.len());
    println!("clusters={}", clustering.num_clusters());
    println!("centers={}", clustering.centers.len());
    println!("noise={}", clustering.noise.len());
    if let Some(out) = &args.output {
        data::write_clustering(clustering, out, args.sidecar)?;
    }
    if let Some(gt) = &args.ground_truth {
        let truth = data::read_labels(gt)?;
        let pred: Vec<i64> = clustering.labels.iter().map(|&l| l as i64).collect();
        print_scores(&pred, &truth)?;
    }
    Ok(())
}

fn load_points(args: &RunArgs) -> Result<PointSet, Failure> {
    let input = args
        .input
        .as_deref()
        .ok_or_else(|| usage("--input is required (or --from-state to re-cluster a saved state)"))?;
    require_file(input, "input")?;
    let format = resolve_format(input, args.format)?;
    let t = Instant::now();
    let points = data::read_vectors(input, format)?;
    log::info!(
        "read {} points of dimension {} in {:.3}s",
        points.len(),
        points.dim(),
        t.elapsed().as_secs_f64()
    );
    Ok(points)
}

fn cmd_run(args: &RunArgs, exact: bool) -> CmdResult {
    if let Some(gt) = &args.ground_truth {
        require_file(gt, "ground truth")?;
    }
    if let Some(state_path) = &args.from_state {
        require_file(state_path, "state")?;
        let center = center_policy(args)?;
        let noise = NoisePolicy::new(args.rho_min);
        center.validate()?;
        noise.validate()?;
        let state = data::read_state(state_path)?;
        let t = Instant::now();
        let clustering = reapply_policies(&state, &center, &noise)?;
        println!("time_reapply_s={:.6}", t.elapsed().as_secs_f64());
        return report(&clustering, args);
    }

    let config = pipeline_config(args, exact)?;
    let points = load_points(args)?;
    if let IndexConfig::Vamana { params, .. } = &config.index {
        params.validate(points.len())?;
    }
    let result = run_pipeline(&points, &config)?;
    if let Some(path) = &args.state_dump {
        data::write_state(&result.state, path)?;
    }
    println!("d={}", points.dim());
    println!("fallbacks={}", result.fallbacks);
    println!("dependent_resolved_in_knn={}", result.dependent_stats.resolved_in_knn);
    println!("dependent_rounds={}", result.dependent_stats.rounds.len());
    println!("dependent_exhaustive={}", result.dependent_stats.exhaustive);
    print_timings(&result.timings);
    report(&result.clustering, args)
}

fn cmd_score(args: &ScoreArgs) -> CmdResult {
    require_file(&args.pred, "prediction file")?;
    require_file(&args.truth, "reference file")?;
    let pred = data::read_labels(&args.pred)?;
    let truth = data::read_labels(&args.truth)?;
    print_scores(&pred, &truth)
}

fn cmd_gen(args: &GenArgs) -> CmdResult {
    let format = resolve_format(&args.output, args.format)?;
    let spec = GaussianSpec {
        n: args.n,
        dim: args.d,
        clusters: args.c,
        variance: args.variance,
        seed: args.seed,
    };
    let (points, labels) = data::generate_gaussian(&spec)?;
    data::write_vectors(&points, &args.output, format)?;
    let label_path = args
        .labels
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.labels", args.output.display())));
    data::write_labels(&labels, &label_path)?;
    println!("n={}", points.len());
    println!("d={}", points.dim());
    println!("labels={}", label_path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Cluster(args) => cmd_run(args, false),
        Command::Exact(args) => cmd_run(args, true),
        Command::Score(args) => cmd_score(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
