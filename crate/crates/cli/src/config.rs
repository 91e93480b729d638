use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use mammo_dissect::conceptset::Task;
use mammo_dissect::simcore::SimParams;
use mammo_dissect::thresholds::SetBasis;

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "MAMMO_DISSECT_OUT";
pub const DEFAULT_OUT: &str = "mammo-dissect-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Similarity parameter overrides shared by flags and the config file.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArgs {
    /// Weight of the concept prior term
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of top-activating images per neuron
    #[arg(long = "top-z")]
    pub top_z: Option<usize>,
    /// Softmax scale for concept conditionals
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Membership weight of the top-ranked image
    #[arg(long = "membership-start")]
    pub membership_start: Option<f64>,
    /// Membership weight of the Z-th ranked image
    #[arg(long = "membership-end")]
    pub membership_end: Option<f64>,
    /// Lower clamp applied before every logarithm
    #[arg(long = "min-prob")]
    pub min_prob: Option<f64>,
}

impl ParamArgs {
    fn or(self, other: ParamArgs) -> ParamArgs {
        ParamArgs {
            lambda: self.lambda.or(other.lambda),
            top_z: self.top_z.or(other.top_z),
            temperature: self.temperature.or(other.temperature),
            membership_start: self.membership_start.or(other.membership_start),
            membership_end: self.membership_end.or(other.membership_end),
            min_prob: self.min_prob.or(other.min_prob),
        }
    }

    fn resolve(&self) -> SimParams {
        let d = SimParams::default();
        SimParams {
            lambda: self.lambda.unwrap_or(d.lambda),
            top_z: self.top_z.unwrap_or(d.top_z),
            temperature: self.temperature.unwrap_or(d.temperature),
            membership_start: self.membership_start.unwrap_or(d.membership_start),
            membership_end: self.membership_end.unwrap_or(d.membership_end),
            min_prob: self.min_prob.unwrap_or(d.min_prob),
        }
    }
}

/// Options common to the analysis commands.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Bundle manifest (manifest.json)
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Concept-set CSV overriding the bundle's own
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    /// Comma-separated layer names (default: early, middle and late layers)
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<String>,
    /// Output directory [env: MAMMO_DISSECT_OUT] [default: mammo-dissect-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for figure layout
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated output formats [default: csv,json,svg]
    #[arg(long, value_delimiter = ',')]
    pub formats: Vec<Format>,
    /// Concept set counted by set-based analyses: encoded or labelled [default: encoded]
    #[arg(long)]
    pub basis: Option<SetBasis>,
    #[command(flatten)]
    pub params: ParamArgs,
}

/// JSON run configuration; every field is optional and flags take precedence.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub bundle: Option<PathBuf>,
    pub bundle_b: Option<PathBuf>,
    pub concepts: Option<PathBuf>,
    pub layers: Vec<String>,
    pub layers_b: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub formats: Vec<Format>,
    pub basis: Option<SetBasis>,
    pub params: ParamArgs,
    pub task: Option<Task>,
    pub top: Option<usize>,
    pub images: Option<usize>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved settings for one analysis command.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub bundle: PathBuf,
    pub concepts: Option<PathBuf>,
    pub layers: Vec<String>,
    pub out: PathBuf,
    pub seed: u64,
    pub formats: Vec<Format>,
    pub basis: SetBasis,
    pub params: SimParams,
}

impl Resolved {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn pick_vec<T: Clone>(flag: &[T], config: &[T]) -> Vec<T> {
    if flag.is_empty() {
        config.to_vec()
    } else {
        flag.to_vec()
    }
}

pub fn resolve(common: &CommonArgs, config: &RunConfig) -> Result<Resolved, CliError> {
    let bundle = common
        .bundle
        .clone()
        .or_else(|| config.bundle.clone())
        .ok_or_else(|| CliError::Usage("--bundle is required (flag or config)".into()))?;
    Ok(resolve_with_bundle(common, config, bundle))
}

pub fn resolve_with_bundle(common: &CommonArgs, config: &RunConfig, bundle: PathBuf) -> Resolved {
    let out = common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut formats = pick_vec(&common.formats, &config.formats);
    if formats.is_empty() {
        formats = vec![Format::Csv, Format::Json, Format::Svg];
    }
    formats.sort();
    formats.dedup();
    Resolved {
        bundle,
        concepts: common.concepts.clone().or_else(|| config.concepts.clone()),
        layers: pick_vec(&common.layers, &config.layers),
        out,
        seed: common.seed.or(config.seed).unwrap_or(0),
        formats,
        basis: common.basis.or(config.basis).unwrap_or_default(),
        params: common.params.clone().or(config.params.clone()).resolve(),
    }
}
