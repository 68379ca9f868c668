mod commands;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hehdc::ckks::CkksError;
use hehdc::protocol::{ErrorCode, ProtocolError};

use params::ParamsArg;

#[derive(Parser, Debug)]
#[command(name = "hehdc", version, about = "Hyperdimensional classification of CKKS-encrypted queries")]
struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Write a JSON report here (CSV tables go next to it).
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert MNIST IDX files or synthetic blobs into train/val/test files.
    Ingest(IngestArgs),
    /// Train a normalized class model.
    Train(TrainArgs),
    /// Quantize class hypervectors and search the query scale.
    Quantize(QuantizeArgs),
    /// Generate a secret key and rotation keys.
    Keygen(KeygenArgs),
    /// Serve encrypted similarity queries.
    Serve(ServeArgs),
    /// Classify samples through a server.
    Classify(ClassifyArgs),
    /// Latency benchmarks.
    Bench(BenchArgs),
    /// Accuracy over a grid of degrees and quantization widths.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Source {
    Mnist,
    Synthetic,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, value_enum, default_value_t = Source::Mnist)]
    source: Source,
    /// Dataset root holding `mnist/` or the IDX files directly.
    #[arg(long, env = "HEHDC_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// 58000/2000/10000 instead of 10000/2000/2000.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Feature dimension of synthetic samples.
    #[arg(long, default_value_t = 16)]
    features: usize,
    /// Synthetic training samples per class; validation and test get a quarter.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    spread: f32,
    /// Output directory for train.heds, val.heds and test.heds.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory with train.heds (val.heds and test.heds are evaluated if present).
    #[arg(long)]
    data: PathBuf,
    /// Hypervector dimension.
    #[arg(long, default_value_t = 2048)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.035)]
    lr: f64,
    /// Preprocessing applied before projection.
    #[arg(long, value_enum, default_value_t = PreprocessArg::UnitNorm)]
    preprocess: PreprocessArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PreprocessArg {
    Identity,
    UnitNorm,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Integer width of the class hypervectors.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(2..=32))]
    bits: u32,
    /// Parameters the model will be served with.
    #[arg(long, default_value = "13")]
    params: ParamsArg,
    /// Directory with val.heds, used for the scale search.
    #[arg(long)]
    data: PathBuf,
    /// Candidate query scales (log2), comma separated; defaults to every
    /// even width below the first prime.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct KeySource {
    /// Manifest published by the server; only the needed rotation keys are made.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Parameter set; keys for every power-of-two rotation are made.
    #[arg(long)]
    params: Option<ParamsArg>,
}

#[derive(Args, Debug)]
struct KeygenArgs {
    #[command(flatten)]
    source: KeySource,
    /// Output directory for secret.key and galois.keys.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "13")]
    params: ParamsArg,
    /// `host:port` or `unix:/path`.
    #[arg(long, default_value = "127.0.0.1:7878")]
    endpoint: String,
    #[arg(long, default_value = "manifest.json")]
    manifest_out: PathBuf,
    /// Exit after this many connections.
    #[arg(long)]
    max_connections: Option<usize>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory with secret.key and galois.keys.
    #[arg(long)]
    keys: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    endpoint: String,
    /// A .heds file, or a directory holding test.heds.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Plaintext model to compare decisions against.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Ops,
    E2e,
    Ablation,
    All,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Degrees (log2 N) for the ops and e2e suites.
    #[arg(long, value_delimiter = ',', default_value = "11,12,13")]
    params_grid: Vec<u32>,
    /// Hypervector dimensions for the e2e suite.
    #[arg(long, value_delimiter = ',', default_value = "2048,8192")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 784)]
    input_dim: usize,
    /// Degree (log2 N) of the ablation.
    #[arg(long, default_value_t = 13)]
    ablation_n: u32,
    #[arg(long, default_value_t = 4096)]
    ablation_dim: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Calls per sample; each sample keeps the fastest.
    #[arg(long, default_value_t = 5)]
    inner: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Plain,
    Encrypted,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model files; one grid row set per model.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    /// A .heds file, or a directory holding test.heds.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Plain)]
    mode: Mode,
    #[arg(long, value_delimiter = ',', default_value = "11,12,13")]
    params_grid: Vec<u32>,
    /// Class widths to evaluate; 0 keeps the floating-point model.
    #[arg(long, value_delimiter = ',', default_value = "0,8,16")]
    bits_grid: Vec<u32>,
    /// Limit on evaluated samples (encrypted mode is slow).
    #[arg(long)]
    count: Option<usize>,
}

/// Errors that are the caller's fault rather than a runtime failure.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn is_parameter_error(e: &CkksError) -> bool {
    matches!(
        e,
        CkksError::SecurityBudgetExceeded { .. }
            | CkksError::UnsupportedDegree(_)
            | CkksError::ChainTooShort(_)
            | CkksError::InvalidPrimeWidth(_)
            | CkksError::ScaleTooLarge { .. }
            | CkksError::ParameterMismatch
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CkksError>() {
            return if is_parameter_error(e) { 4 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<ProtocolError>() {
            return match e {
                ProtocolError::Ckks(c) if is_parameter_error(c) => 4,
                ProtocolError::Rejected { code: ErrorCode::ParamsMismatch, .. }
                | ProtocolError::Remote { code: ErrorCode::ParamsMismatch, .. } => 4,
                _ => 3,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
