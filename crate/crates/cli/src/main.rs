mod commands;
mod sidecar;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polarmosaic::ppdn::TileGrid;
use polarmosaic::train::{AugmentMode, InitScheme, LossVariant};
use polarmosaic::PfaPattern;

/// Polarization demosaicing for division-of-focal-plane cameras.
#[derive(Parser, Debug)]
#[command(name = "polarmosaic", version, about)]
struct Cli {
    /// Record and enforce the deterministic reduction mode.
    #[arg(long, global = true)]
    deterministic: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a four-channel stack through a filter array.
    Mosaic(MosaicArgs),
    /// Rebuild the four channels from a mosaic.
    Demosaic(DemosaicArgs),
    /// Stokes parameters, DoLP and AoLP of a stack.
    Stokes(StokesArgs),
    /// PNG previews of a Stokes directory.
    Render(RenderArgs),
    /// Train network weights on the scenes of a manifest.
    Train(Box<TrainArgs>),
    /// PSNR of a reconstruction against ground truth.
    Eval(EvalArgs),
    /// Parameter and multiply-accumulate counts.
    Count(CountArgs),
    /// Time the inference path.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct MosaicArgs {
    /// Directory with <name>_000/_045/_090/_135 channel files.
    input: PathBuf,
    /// Output mosaic (.pfm or .pgm).
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "90,45;135,0")]
    pattern: PfaPattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    Bilinear,
    Ppdn,
}

#[derive(Args, Debug)]
struct DemosaicArgs {
    /// Mosaic file (.pfm or .pgm).
    input: PathBuf,
    /// Output stack directory.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "bilinear")]
    method: Method,
    /// Weight file, required for --method ppdn.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value = "1x1")]
    tile: TileGrid,
    #[arg(long, default_value_t = 8)]
    halo: usize,
    /// Filter pattern of a mosaic without sidecar.
    #[arg(long)]
    pattern: Option<PfaPattern>,
    /// Channel file prefix; defaults to the mosaic's file stem.
    #[arg(long)]
    name: Option<String>,
    /// Write the reconstruction stage output instead of the refined one.
    #[arg(long)]
    coarse: bool,
}

#[derive(Args, Debug)]
struct StokesArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Added to S0 before dividing for DoLP.
    #[arg(long, default_value_t = polarmosaic::EVAL_EPS)]
    eps: f64,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Directory written by `stokes`.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// S0 value rendered as white.
    #[arg(long, default_value_t = 1.0)]
    s0_max: f64,
}

#[derive(Args, Debug)]
struct NetworkArgs {
    /// ppdn or ppdn-l.
    #[arg(long, conflicts_with_all = ["m", "n", "k"])]
    preset: Option<String>,
    /// Reconstruction blocks.
    #[arg(long, requires_all = ["n", "k"])]
    m: Option<usize>,
    /// Refining blocks.
    #[arg(long, requires_all = ["m", "k"])]
    n: Option<usize>,
    /// Filters per hidden layer.
    #[arg(long, requires_all = ["m", "n"])]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    manifest: PathBuf,
    /// Output weight file.
    #[arg(short, long)]
    output: PathBuf,
    /// JSON training configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay_every: Option<u64>,
    #[arg(long)]
    decay_factor: Option<f64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// full, no-refine or plain-aolp.
    #[arg(long)]
    variant: Option<LossVariant>,
    /// physical, naive or off.
    #[arg(long)]
    augment: Option<AugmentMode>,
    /// zero-residual or fan-in.
    #[arg(long)]
    init: Option<InitScheme>,
    #[arg(long)]
    log_every: Option<u64>,
    #[arg(long)]
    pattern: Option<PfaPattern>,
    #[arg(long)]
    w1: Option<f64>,
    #[arg(long)]
    w2: Option<f64>,
    #[arg(long)]
    w3: Option<f64>,
    #[arg(long)]
    w4: Option<f64>,
    /// Metrics log, one JSON object per step.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also write numbered checkpoints every N steps.
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    truth: PathBuf,
    recon: PathBuf,
    /// Pixels excluded along every edge.
    #[arg(long, default_value_t = polarmosaic::metrics::DEFAULT_BORDER)]
    border: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CountArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, default_value_t = 2048)]
    height: usize,
    #[arg(long, default_value_t = 2448)]
    width: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Network to time; repeat to compare presets.
    #[arg(long, default_values_t = vec!["ppdn".to_string()])]
    preset: Vec<String>,
    /// Time these weights instead of seeded random ones.
    #[arg(long, conflicts_with = "preset")]
    weights: Option<PathBuf>,
    /// Frame size HxW; repeat for a latency series.
    #[arg(long, default_values_t = vec!["512x512".to_string()])]
    size: Vec<String>,
    /// Time inference on this mosaic instead of synthetic noise.
    #[arg(long, conflicts_with = "size")]
    from_file: Option<PathBuf>,
    #[arg(long, default_value = "1x1")]
    tile: TileGrid,
    #[arg(long, default_value_t = 8)]
    halo: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Working-set budget in MiB.
    #[arg(long, default_value_t = 4096)]
    memory_mb: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = commands::init_threads().and_then(|()| match cli.command {
        Command::Mosaic(a) => commands::mosaic(a),
        Command::Demosaic(a) => commands::demosaic(a),
        Command::Stokes(a) => commands::stokes(a),
        Command::Render(a) => commands::render(a),
        Command::Train(a) => commands::train(*a, cli.deterministic),
        Command::Eval(a) => commands::eval(a),
        Command::Count(a) => commands::count(a),
        Command::Bench(a) => commands::bench(a, cli.deterministic),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
