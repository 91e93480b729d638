//! `mammo-dissect`: label neurons with concepts and produce layer analytics.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mammo_dissect::conceptset::Task;

mod commands;
mod config;

use config::{CommonArgs, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
    /// A required input artifact is absent.
    MissingArtifact(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::MissingArtifact(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::MissingArtifact(m) => write!(f, "missing artifact: {m}"),
        }
    }
}

impl From<mammo_dissect::Error> for CliError {
    fn from(e: mammo_dissect::Error) -> Self {
        use mammo_dissect::exchange::ExchangeError;
        if e.is_io() {
            return CliError::Io(e.to_string());
        }
        match &e {
            mammo_dissect::Error::Exchange(x) if matches!(x.root(), ExchangeError::MissingFile(_)) => {
                CliError::MissingArtifact(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

macro_rules! lift {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                mammo_dissect::Error::from(e).into()
            }
        }
    )*};
}

lift!(
    mammo_dissect::exchange::ExchangeError,
    mammo_dissect::conceptset::ConceptSetError,
    mammo_dissect::simcore::SimError,
    mammo_dissect::labeling::LabelError,
    mammo_dissect::thresholds::ThresholdError,
    mammo_dissect::report::ReportError
);

#[derive(Parser, Debug)]
#[command(
    name = "mammo-dissect",
    version,
    about = "Label vision-model neurons with mammography concepts via SoftWPMI"
)]
struct Cli {
    /// Maximum worker threads (outputs are identical for any value)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON run configuration; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic bundle with planted neuron-concept relationships
    Synth(SynthArgs),
    /// Compute and store the similarity matrix of every selected layer
    Similarities(CommonArgs),
    /// Label every neuron with its most similar concept
    Label(CommonArgs),
    /// Per-layer thresholds, encoded concepts and activated neurons
    Thresholds(CommonArgs),
    /// Learned versus missed concepts across the selected layers
    Coverage(CommonArgs),
    /// Compare two models dissected on the same probe set
    Compare(CompareArgs),
    /// Top concepts and top images of a single neuron
    Neuron(NeuronArgs),
    /// Every single-bundle product: labels, thresholds, evolution, categories, tasks, coverage, word clouds
    Report(CommonArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Bundle directory to create
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of probe images
    #[arg(long, default_value_t = 400)]
    pub images: usize,
    /// Embedding dimension
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Number of generated concepts
    #[arg(long = "concept-count", default_value_t = 48, conflicts_with = "shipped_concepts")]
    pub concept_count: usize,
    /// Use the shipped 763-concept set instead of generated concepts
    #[arg(long = "shipped-concepts")]
    pub shipped_concepts: bool,
    /// Layers as name:neurons[:stage], comma-separated
    #[arg(long, value_delimiter = ',', default_value = "early:16,middle:24,late:32")]
    pub layers: Vec<String>,
    /// Planted neurons per layer
    #[arg(long, default_value_t = 0)]
    pub planted: usize,
    /// Noise amplitude on planted activations: a number, or none, low (0.01), high (0.5)
    #[arg(long, default_value = "low", value_parser = parse_noise)]
    pub noise: f64,
    #[arg(long = "bundle-id", default_value = "synthetic")]
    pub bundle_id: String,
    #[arg(long = "model-id", default_value = "synthetic-model")]
    pub model_id: String,
    #[arg(long = "probe-id", default_value = "synthetic-probe")]
    pub probe_id: String,
}

fn parse_noise(s: &str) -> Result<f64, String> {
    match s {
        "none" => Ok(0.0),
        "low" => Ok(0.01),
        "high" => Ok(0.5),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| format!("expected a non-negative number or none/low/high, got '{other}'")),
    }
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Manifest of the second model's bundle
    #[arg(long = "bundle-b")]
    pub bundle_b: Option<PathBuf>,
    /// Layer names in the second bundle (default: its early, middle and late layers)
    #[arg(long = "layers-b", value_delimiter = ',')]
    pub layers_b: Vec<String>,
    /// Restrict concept sets to one task: mass, calcification or density
    #[arg(long)]
    pub task: Option<Task>,
}

#[derive(Args, Debug)]
pub struct NeuronArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Neuron index within the layer
    #[arg(long)]
    pub id: usize,
    /// Layer name (default: the last selected layer)
    #[arg(long)]
    pub layer: Option<String>,
    /// Number of top concepts
    #[arg(long)]
    pub top: Option<usize>,
    /// Number of top images
    #[arg(long)]
    pub images: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let jobs = cli.jobs.or(config.jobs);
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Similarities(c) => commands::similarities(&config::resolve(c, &config)?),
        Command::Label(c) => commands::label(&config::resolve(c, &config)?),
        Command::Thresholds(c) => commands::thresholds(&config::resolve(c, &config)?),
        Command::Coverage(c) => commands::coverage(&config::resolve(c, &config)?),
        Command::Compare(a) => commands::compare(a, &config),
        Command::Neuron(a) => commands::neuron(a, &config),
        Command::Report(c) => commands::report(&config::resolve(c, &config)?),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mammo-dissect: {e}");
            ExitCode::from(e.code())
        }
    }
}
