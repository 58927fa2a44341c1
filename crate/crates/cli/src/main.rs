mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use sigverify::gru::TrainConfig;

#[derive(Debug, Parser)]
#[command(
    name = "sigverify",
    version,
    about = "Online signature verification with path-signature features"
)]
struct Cli {
    /// Worker threads for the data-parallel stages (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `key = value` run file with one [command] section per subcommand;
    /// flags given on the command line take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log progress to stderr (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Lnps,
    LnpsLevel,
    LnpsRi,
    DeltaXy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NamingArg {
    /// manifest.jsonl if present, otherwise SVC file names
    Auto,
    Svc,
    Manifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    First10,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Lnps)]
    pub variant: VariantArg,
    /// Signature truncation level
    #[arg(long, default_value_t = 2)]
    pub level: usize,
    /// Sliding window width in points (odd)
    #[arg(long, default_value_t = 9)]
    pub window: usize,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = NamingArg::Auto)]
    pub naming: NamingArg,
}

#[derive(Debug, Clone, Args)]
pub struct DtwArgs {
    /// Sakoe-Chiba band radius; unconstrained when absent
    #[arg(long)]
    pub band_radius: Option<usize>,
    /// Divide the alignment cost by the warping path length
    #[arg(long)]
    pub normalize_path: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    /// Triplet margin
    #[arg(long, default_value_t = TrainConfig::default().margin)]
    pub margin: f64,
    #[arg(long, default_value_t = TrainConfig::default().lambda_center)]
    pub lambda_center: f64,
    #[arg(long, default_value_t = TrainConfig::default().lambda_decay)]
    pub lambda_decay: f64,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    /// Elementwise gradient clip
    #[arg(long, default_value_t = TrainConfig::default().clip)]
    pub clip: f64,
    #[arg(long, default_value_t = TrainConfig::default().triplets_per_client_per_epoch)]
    pub triplets_per_client: usize,
    /// Probability that a triplet's negative is another client's genuine sample
    #[arg(long, default_value_t = TrainConfig::default().random_negative_prob)]
    pub random_negative_prob: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().hidden1)]
    pub hidden1: usize,
    #[arg(long, default_value_t = TrainConfig::default().hidden2)]
    pub hidden2: usize,
    #[arg(long, default_value_t = TrainConfig::default().embedding)]
    pub embedding: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Also write the JSON report to this file
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write every score as CSV to this file
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Print a plain-text table instead of JSON
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as CSV files plus manifest.jsonl
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        clients: usize,
        #[arg(long, default_value_t = 12)]
        genuine: usize,
        #[arg(long, default_value_t = 12)]
        forgeries: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Featurize signature files into feature containers
    Extract {
        /// A signature file (.csv or SVC text) or a directory of them
        #[arg(long)]
        input: PathBuf,
        /// Output directory, one `<stem>.lnps` per input file
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        /// Skip per-channel z-normalization
        #[arg(long)]
        raw: bool,
    },
    /// Train an embedding model on the first trial split of a dataset
    Train {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Extra training-only dataset (repeatable)
        #[arg(long)]
        aux: Vec<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Genuine templates and training forgeries per client
        #[arg(long, default_value_t = 10)]
        templates: usize,
        #[arg(long, value_enum, default_value_t = PoolArg::All)]
        pool: PoolArg,
        #[arg(long)]
        seed: u64,
        /// Model file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated-trial DTW experiment
    EvalDtw {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        dtw: DtwArgs,
        #[arg(long, default_value_t = 5)]
        templates: usize,
        #[arg(long, value_enum, default_value_t = PoolArg::First10)]
        pool: PoolArg,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Also score other clients' genuine samples as random forgeries
        #[arg(long)]
        random_forgeries: bool,
        #[command(flatten)]
        output: ReportArgs,
    },
    /// Repeated-trial RNN experiment, training a model per trial unless --model is given
    EvalRnn {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long)]
        aux: Vec<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 10)]
        templates: usize,
        #[arg(long, value_enum, default_value_t = PoolArg::All)]
        pool: PoolArg,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        random_forgeries: bool,
        /// Evaluate this trained model instead of training
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        output: ReportArgs,
    },
    /// Score one probe against templates and decide at a threshold
    Verify {
        #[arg(long)]
        probe: PathBuf,
        /// Template file (repeat, at least two)
        #[arg(long = "template", required = true, num_args = 1)]
        templates: Vec<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        dtw: DtwArgs,
        /// Embedding model; DTW is used when absent
        #[arg(long)]
        model: Option<PathBuf>,
        /// Accept when the score is below this value
        #[arg(long)]
        threshold: f64,
    },
}

/// A failed run: usage and validation problems exit with 2, everything else with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<sigverify::Error> for Failure {
    fn from(e: sigverify::Error) -> Self {
        match e {
            sigverify::Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

const VALUE_GLOBALS: [&str; 2] = ["--threads", "--config"];

/// Index of the subcommand token, skipping global options and their values.
fn command_position(args: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if VALUE_GLOBALS.contains(&a.as_str()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn config_path(args: &[String]) -> Option<PathBuf> {
    args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

/// Merges the run file's section for the chosen command into `args`.
fn apply_config(args: Vec<String>) -> Result<Vec<String>, Failure> {
    let (Some(path), Some(pos)) = (config_path(&args), command_position(&args)) else {
        return Ok(args);
    };
    let file = config::load(&path).map_err(Failure::Usage)?;
    let cli = Cli::command();
    let Some(sub) = cli.find_subcommand(&args[pos]) else {
        return Ok(args);
    };
    let entries = file.sections.get(sub.get_name()).cloned().unwrap_or_default();
    let mut switches = Vec::new();
    let mut known = Vec::new();
    for arg in sub.get_arguments().chain(cli.get_arguments()) {
        if let Some(long) = arg.get_long() {
            known.push(long.to_string());
            if !arg.get_action().takes_values() {
                switches.push(long.to_string());
            }
        }
    }
    for (key, _) in &entries {
        if !known.contains(key) || key == "config" {
            return Err(Failure::Usage(format!(
                "{}: unknown key `{key}` in [{}]",
                path.display(),
                sub.get_name()
            )));
        }
    }
    config::merge(&args, pos, &entries, &switches).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Failure::Usage("--threads must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without the parallel feature; running on one thread");
    }
    Ok(())
}

fn run(args: Vec<String>) -> Result<(), Failure> {
    let args = apply_config(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    init_threads(cli.threads)?;
    commands::dispatch(cli.command)
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
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
