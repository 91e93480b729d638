//! Neuron concept labelling for mammography vision models.
//!
//! A dissection bundle supplies probe-image embeddings, concept-text
//! embeddings and per-layer activation tables. From these the crate computes
//! SoftWPMI similarity matrices, labels each neuron with its most similar
//! concept, derives adaptive per-layer thresholds, and produces layer-wise,
//! category-wise and cross-model analytics with CSV, JSON and SVG outputs.
//!
//! ```
//! use mammo_dissect::exchange::{synthesize, SynthSpec};
//! use mammo_dissect::pipeline::{analyze_layers, select_layers};
//! use mammo_dissect::simcore::SimParams;
//!
//! let mut spec = SynthSpec::default();
//! spec.plant_evenly(4).unwrap();
//! let bundle = synthesize(&spec).unwrap().into_bundle().unwrap();
//! let layers = select_layers(&bundle, &[]).unwrap();
//! let analyses = analyze_layers(&bundle, &SimParams::default(), &layers).unwrap();
//! assert_eq!(analyses.len(), 3);
//! ```

pub mod analytics;
pub mod conceptset;
pub mod exchange;
mod io_util;
pub mod labeling;
pub mod pipeline;
pub mod report;
pub mod simcore;
pub mod thresholds;

pub use exchange::Matrix;

use thiserror::Error;

/// Any failure raised by the pipeline, grouped by the layer that produced it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Exchange(#[from] exchange::ExchangeError),
    #[error(transparent)]
    Concepts(#[from] conceptset::ConceptSetError),
    #[error(transparent)]
    Sim(#[from] simcore::SimError),
    #[error(transparent)]
    Label(#[from] labeling::LabelError),
    #[error(transparent)]
    Threshold(#[from] thresholds::ThresholdError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error("probe mismatch: {0}")]
    ProbeMismatch(String),
    #[error("concept set mismatch: {0}")]
    ConceptSetMismatch(String),
    #[error("layer not found: {0}")]
    LayerNotFound(String),
}

impl Error {
    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Exchange(e) => e.is_io(),
            Error::Concepts(conceptset::ConceptSetError::Io { .. }) => true,
            Error::Report(report::ReportError::Io { .. }) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
