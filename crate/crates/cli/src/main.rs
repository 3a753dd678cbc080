use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod ablate;
mod assemble;
mod attribute;
mod context;
mod evaluate;
mod extract;
mod font;
mod overlay;
mod phantom;
mod report;
mod train;

use context::{CliError, RunContext};

#[derive(Parser, Debug)]
#[command(name = "kneeoa", version, about = "Structured knee OA features, KL grading and ablation reports")]
struct Cli {
    /// Dataset manifest CSV.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Parameter override as key=value (repeatable), e.g. gbt.n_rounds=100.
    #[arg(long = "config", global = true, value_name = "KEY=VALUE")]
    config: Vec<String>,
    /// Worker threads (default or 0: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure every manifest image and write raw feature rows plus audits.
    Extract(ExtractArgs),
    /// Impute missing slots with training medians.
    Assemble(AssembleArgs),
    /// Train the boosted-tree grader with stratified cross-validation.
    Train(TrainArgs),
    /// Score a trained model on one split with bootstrap intervals.
    Evaluate(EvaluateArgs),
    /// Family ablation (retraining) and/or inference-time interventions.
    Ablate(AblateArgs),
    /// Permutation importance and per-image occlusion deltas.
    Attribute(AttributeArgs),
    /// Draw landmarks, ROI boxes and subchondral bands from an audit file.
    Overlay(OverlayArgs),
    /// Combine evaluation and ablation outputs into one Markdown report.
    Report(ReportArgs),
    /// Write a synthetic phantom dataset (images, masks, manifest).
    Phantom(PhantomArgs),
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    clahe_clip: Option<f64>,
    /// CLAHE tile grid, e.g. 8x8.
    #[arg(long)]
    clahe_tiles: Option<String>,
    #[arg(long)]
    clip_lo: Option<f64>,
    #[arg(long)]
    clip_hi: Option<f64>,
    /// Write the four osteophyte patches of each image as PNGs here.
    #[arg(long)]
    dump_rois: Option<PathBuf>,
    /// Use an existing KL-0 reference instead of fitting one.
    #[arg(long)]
    kl0_ref: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// Raw feature table (default: OUT/features_raw.csv).
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Assembled feature table (default: OUT/features.csv).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Skip cross-validation.
    #[arg(long)]
    no_cv: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for kneeoa_core::dataio::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Val => Self::Val,
            SplitArg::Test => Self::Test,
        }
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Protocol {
    Family,
    Intervention,
    Both,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    protocol: Protocol,
    /// Families to intervene on (jsn, osp, scl, all); default all four.
    #[arg(long, value_delimiter = ',')]
    families: Vec<String>,
}

#[derive(Args, Debug)]
struct AttributeArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Image ids for per-image occlusion reports (repeatable).
    #[arg(long = "image")]
    images: Vec<String>,
}

#[derive(Args, Debug)]
struct OverlayArgs {
    /// Audit JSON written by `extract`.
    #[arg(long)]
    audit: PathBuf,
    /// Radiograph in acquisition orientation.
    #[arg(long)]
    image: PathBuf,
    /// Output PNG (default: OUT/overlays/<id>.png).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Every k-th image gets no mask (0 disables).
    #[arg(long, default_value_t = 0)]
    missing_mask_every: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs.filter(|&j| j > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::invocation(format!("cannot configure {j} jobs: {e}")))?;
    }
    let ctx = RunContext::new(cli.seed, &cli.config, cli.out.clone(), cli.manifest.clone())?;
    match cli.command {
        Command::Extract(a) => extract::run(&ctx, &a),
        Command::Assemble(a) => assemble::run(&ctx, &a),
        Command::Train(a) => train::run(&ctx, &a),
        Command::Evaluate(a) => evaluate::run(&ctx, &a),
        Command::Ablate(a) => ablate::run(&ctx, &a),
        Command::Attribute(a) => attribute::run(&ctx, &a),
        Command::Overlay(a) => overlay::run(&ctx, &a),
        Command::Report(_) => report::run(&ctx),
        Command::Phantom(a) => phantom::run(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
