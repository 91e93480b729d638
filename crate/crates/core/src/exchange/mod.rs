//! On-disk dissection bundles: NPY matrices plus a JSON manifest.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::conceptset::ConceptSetError;

mod bundle;
mod matrix;
pub mod npy;
mod synth;

pub use bundle::{load_bundle, BundleManifest, LayerRecord, LazyMatrix, StageTag, ValidatedBundle, FORMAT_VERSION};
pub use matrix::Matrix;
pub use npy::{read_matrix, read_matrix_header, write_matrix, NpyHeader, Precision};
pub use synth::{
    generate_synthetic_bundle, synthesize, ConceptSource, PlantedNeuron, SynthLayer, SynthSpec, SyntheticData,
};

#[derive(Debug, Error)]
pub enum ExchangeError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed matrix header: {0}")]
    MalformedHeader(String),
    #[error("unsupported matrix layout: {0}")]
    UnsupportedLayout(String),
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("non-finite value at ({row}, {col})")]
    RejectedValue { row: usize, col: usize },
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("text embeddings have {text_rows} rows but the concept set has {concepts} concepts")]
    ConceptCountMismatch { text_rows: usize, concepts: usize },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid synthetic bundle spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Concepts(#[from] ConceptSetError),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<ExchangeError>,
    },
}

impl ExchangeError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            ExchangeError::MissingFile(path.to_path_buf())
        } else {
            ExchangeError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub(crate) fn with_path(self, path: &Path) -> Self {
        match self {
            e @ (ExchangeError::Io { .. } | ExchangeError::MissingFile(_) | ExchangeError::InFile { .. }) => e,
            other => ExchangeError::InFile {
                path: path.to_path_buf(),
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with file context stripped.
    pub fn root(&self) -> &ExchangeError {
        match self {
            ExchangeError::InFile { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), ExchangeError::Io { .. })
    }
}
