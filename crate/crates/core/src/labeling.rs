//! Neuron labels and per-neuron cards (top concepts and top images).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conceptset::{contains_word, ConceptSet};
use crate::exchange::Matrix;
use crate::simcore::{top_images, SimilarityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronLabel {
    pub layer_name: String,
    pub neuron: usize,
    pub concept: usize,
    pub concept_text: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardConcept {
    pub concept: usize,
    pub text: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardImage {
    pub image: usize,
    pub path: Option<String>,
    pub activation: f64,
}

/// The most similar concepts and most activating images of one neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronCard {
    pub label: NeuronLabel,
    pub top_concepts: Vec<CardConcept>,
    pub top_images: Vec<CardImage>,
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

fn label_row(s: &SimilarityMatrix, concepts: &ConceptSet, k: usize) -> NeuronLabel {
    let row = s.values.row(k);
    let m = argmax(row);
    NeuronLabel {
        layer_name: s.layer_name.clone(),
        neuron: k,
        concept: m,
        concept_text: concepts.text(m).to_string(),
        similarity: row[m],
    }
}

/// Labels every neuron with its most similar concept.
///
/// # Panics
/// If `concepts` does not have one entry per column of `s`.
pub fn label_neurons(s: &SimilarityMatrix, concepts: &ConceptSet) -> Vec<NeuronLabel> {
    assert_eq!(
        s.concept_count(),
        concepts.len(),
        "similarity columns must match the concept set"
    );
    if s.concept_count() == 0 {
        return Vec::new();
    }
    (0..s.neuron_count()).map(|k| label_row(s, concepts, k)).collect()
}

/// Concept indices of a row sorted by similarity descending, index ascending on ties.
pub fn ranked_concepts(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order
}

pub fn neuron_card(
    s: &SimilarityMatrix,
    activations: &Matrix,
    concepts: &ConceptSet,
    neuron: usize,
    top_c: usize,
    top_z: usize,
    image_paths: Option<&[String]>,
) -> Result<NeuronCard, LabelError> {
    let oob = |m: String| Err(LabelError::IndexOutOfRange(m));
    let (k, m) = s.values.shape();
    let n = activations.rows();
    if neuron >= k {
        return oob(format!("neuron {neuron} (layer has {k})"));
    }
    if m == 0 || top_c > m {
        return oob(format!("top {top_c} concepts (set has {m})"));
    }
    if top_z > n {
        return oob(format!("top {top_z} images (probe has {n})"));
    }
    if activations.cols() != k {
        return oob(format!(
            "activation table has {} neurons, similarities {k}",
            activations.cols()
        ));
    }
    if let Some(paths) = image_paths {
        if paths.len() != n {
            return oob(format!("{} image paths for {n} images", paths.len()));
        }
    }
    let row = s.values.row(neuron);
    let top_concepts = ranked_concepts(row)
        .into_iter()
        .take(top_c)
        .map(|j| CardConcept {
            concept: j,
            text: concepts.text(j).to_string(),
            similarity: row[j],
        })
        .collect();
    let q = activations.column(neuron);
    let top_images = top_images(&q, top_z)
        .into_iter()
        .map(|i| CardImage {
            image: i,
            path: image_paths.map(|p| p[i].clone()),
            activation: q[i],
        })
        .collect();
    Ok(NeuronCard {
        label: label_row(s, concepts, neuron),
        top_concepts,
        top_images,
    })
}

/// Fraction of the card's top concepts containing `keyword` as a whole word.
pub fn keyword_share(card: &NeuronCard, keyword: &str) -> f64 {
    if card.top_concepts.is_empty() {
        return 0.0;
    }
    let hits = card
        .top_concepts
        .iter()
        .filter(|c| contains_word(&c.text, keyword))
        .count();
    hits as f64 / card.top_concepts.len() as f64
}
