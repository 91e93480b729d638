//! Adaptive per-layer thresholds and the concept and neuron sets they select.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::Matrix;
use crate::labeling::argmax;
use crate::simcore::SimilarityMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("similarity matrix for layer '{0}' is empty")]
    EmptyMatrix(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    SingleModelMean,
    TwoModelMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerThreshold {
    pub layer_name: String,
    pub tau: f64,
    pub source: ThresholdSource,
}

/// Concepts encoded and neurons activated at a layer under threshold `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedSet {
    pub layer_name: String,
    pub tau: f64,
    /// Concepts whose best similarity over all neurons reaches `tau`.
    pub encoded_concepts: BTreeSet<usize>,
    /// Neurons whose label similarity reaches `tau`.
    pub activated_neurons: BTreeSet<usize>,
    /// Argmax labels of the activated neurons.
    pub labelled_concepts: BTreeSet<usize>,
}

/// Which concept set of an [`EncodedSet`] an analysis counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetBasis {
    /// Concepts whose best neuron reaches the threshold.
    #[default]
    Encoded,
    /// Labels of the neurons that reach the threshold.
    Labelled,
}

impl SetBasis {
    pub fn pick(self, set: &EncodedSet) -> &BTreeSet<usize> {
        match self {
            SetBasis::Encoded => &set.encoded_concepts,
            SetBasis::Labelled => &set.labelled_concepts,
        }
    }
}

impl std::fmt::Display for SetBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SetBasis::Encoded => "encoded",
            SetBasis::Labelled => "labelled",
        })
    }
}

impl std::str::FromStr for SetBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "encoded" => Ok(SetBasis::Encoded),
            "labelled" | "labeled" => Ok(SetBasis::Labelled),
            _ => Err(format!("unknown set basis '{s}' (expected encoded or labelled)")),
        }
    }
}

/// Arithmetic mean in row-major order.
pub fn matrix_mean(m: &Matrix) -> Option<f64> {
    if m.is_empty() {
        return None;
    }
    Some(m.as_slice().iter().sum::<f64>() / m.as_slice().len() as f64)
}

pub fn layer_threshold(s: &SimilarityMatrix) -> Result<LayerThreshold, ThresholdError> {
    let tau = matrix_mean(&s.values).ok_or_else(|| ThresholdError::EmptyMatrix(s.layer_name.clone()))?;
    Ok(LayerThreshold {
        layer_name: s.layer_name.clone(),
        tau,
        source: ThresholdSource::SingleModelMean,
    })
}

/// Shared threshold for the same layer position in two models: the larger mean.
pub fn pair_threshold(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<LayerThreshold, ThresholdError> {
    let ta = layer_threshold(a)?;
    let tb = layer_threshold(b)?;
    let layer_name = if a.layer_name == b.layer_name {
        a.layer_name.clone()
    } else {
        let (lo, hi) = if a.layer_name <= b.layer_name { (a, b) } else { (b, a) };
        format!("{}~{}", lo.layer_name, hi.layer_name)
    };
    Ok(LayerThreshold {
        layer_name,
        tau: ta.tau.max(tb.tau),
        source: ThresholdSource::TwoModelMax,
    })
}

pub fn encoded_set(s: &SimilarityMatrix, tau: f64) -> EncodedSet {
    let (k, m) = s.values.shape();
    let mut col_max = vec![f64::NEG_INFINITY; m];
    let mut activated_neurons = BTreeSet::new();
    let mut labelled_concepts = BTreeSet::new();
    if m > 0 {
        for neuron in 0..k {
            let row = s.values.row(neuron);
            for (mx, v) in col_max.iter_mut().zip(row) {
                *mx = mx.max(*v);
            }
            let best = argmax(row);
            if row[best] >= tau {
                activated_neurons.insert(neuron);
                labelled_concepts.insert(best);
            }
        }
    }
    let encoded_concepts = col_max
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= tau)
        .map(|(j, _)| j)
        .collect();
    EncodedSet {
        layer_name: s.layer_name.clone(),
        tau,
        encoded_concepts,
        activated_neurons,
        labelled_concepts,
    }
}
