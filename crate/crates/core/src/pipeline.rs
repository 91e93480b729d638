//! Bundle-level orchestration: layer selection and per-layer similarity,
//! threshold and encoded-set computation.

use crate::exchange::{LayerRecord, StageTag, ValidatedBundle};
use crate::simcore::{
    concept_activation_matrix, ConceptActivationMatrix, SimParams, SimilarityKernel, SimilarityMatrix,
};
use crate::thresholds::{encoded_set, layer_threshold, EncodedSet, LayerThreshold};
use crate::{Error, Result};

/// Stages analysed when no layers are named.
pub const DEFAULT_STAGES: [StageTag; 3] = [StageTag::Early, StageTag::Middle, StageTag::Late];

/// Resolves layer names to manifest indices. With no names, picks every
/// early, middle or late layer in manifest order, or all layers if none is tagged.
pub fn select_layers(bundle: &ValidatedBundle, names: &[String]) -> Result<Vec<usize>> {
    let records = bundle.layer_records();
    if names.is_empty() {
        let tagged: Vec<usize> = (0..records.len())
            .filter(|&i| DEFAULT_STAGES.contains(&records[i].stage_tag))
            .collect();
        return Ok(if tagged.is_empty() {
            (0..records.len()).collect()
        } else {
            tagged
        });
    }
    names
        .iter()
        .map(|n| {
            bundle.layer_index(n).ok_or_else(|| {
                let known: Vec<&str> = records.iter().map(|r| r.layer_name.as_str()).collect();
                Error::LayerNotFound(format!("'{n}' (bundle has: {})", known.join(", ")))
            })
        })
        .collect()
}

pub fn concept_activations(bundle: &ValidatedBundle) -> Result<ConceptActivationMatrix> {
    Ok(concept_activation_matrix(
        bundle.image_embeddings()?,
        bundle.text_embeddings()?,
    )?)
}

/// Similarity matrices for the given layers, sharing one set of concept statistics.
pub fn layer_similarities(
    bundle: &ValidatedBundle,
    params: &SimParams,
    layers: &[usize],
) -> Result<Vec<SimilarityMatrix>> {
    if layers.is_empty() {
        return Ok(Vec::new());
    }
    let p = concept_activations(bundle)?;
    let kernel = SimilarityKernel::new(&p, *params)?;
    layers
        .iter()
        .map(|&li| {
            let name = &bundle.layer_records()[li].layer_name;
            Ok(kernel.layer(bundle.layer_activations(li)?, name)?)
        })
        .collect()
}

/// Everything derived from one layer under its own single-model threshold.
#[derive(Clone, Debug)]
pub struct LayerAnalysis {
    pub layer_index: usize,
    pub record: LayerRecord,
    pub similarity: SimilarityMatrix,
    pub threshold: LayerThreshold,
    pub encoded: EncodedSet,
}

impl LayerAnalysis {
    pub fn from_similarity(layer_index: usize, record: LayerRecord, similarity: SimilarityMatrix) -> Result<Self> {
        let threshold = layer_threshold(&similarity)?;
        let encoded = encoded_set(&similarity, threshold.tau);
        Ok(LayerAnalysis {
            layer_index,
            record,
            similarity,
            threshold,
            encoded,
        })
    }
}

pub fn analyze_layers(bundle: &ValidatedBundle, params: &SimParams, layers: &[usize]) -> Result<Vec<LayerAnalysis>> {
    let sims = layer_similarities(bundle, params, layers)?;
    layers
        .iter()
        .zip(sims)
        .map(|(&li, s)| LayerAnalysis::from_similarity(li, bundle.layer_records()[li].clone(), s))
        .collect()
}
