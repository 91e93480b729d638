//! Layer evolution, category distributions, task-concept counts, model
//! comparisons and learned-versus-missed coverage.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::conceptset::{textual_overlap, BroadCategory, ConceptSet, Task};
use crate::exchange::{StageTag, ValidatedBundle};
use crate::pipeline::{layer_similarities, LayerAnalysis};
use crate::simcore::{SimParams, SimilarityMatrix};
use crate::thresholds::{encoded_set, pair_threshold, EncodedSet, LayerThreshold, SetBasis};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEvolutionRow {
    pub layer_name: String,
    pub stage: StageTag,
    pub tau: f64,
    pub encoded_mammo: usize,
    pub encoded_nonmammo: usize,
    pub labelled_mammo: usize,
    pub labelled_nonmammo: usize,
    pub activated_neurons: usize,
    pub neuron_count: usize,
}

/// Per-layer thresholds and encoded-concept counts, in manifest order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEvolution {
    pub bundle_id: String,
    pub layers: Vec<LayerEvolutionRow>,
}

fn split_mammo(indices: &BTreeSet<usize>, concepts: &ConceptSet) -> (usize, usize) {
    let mammo = indices
        .iter()
        .filter(|&&j| concepts.entries()[j].is_mammography())
        .count();
    (mammo, indices.len() - mammo)
}

pub fn layer_evolution(bundle_id: &str, analyses: &[LayerAnalysis], concepts: &ConceptSet) -> LayerEvolution {
    let layers = analyses
        .iter()
        .map(|a| {
            let (encoded_mammo, encoded_nonmammo) = split_mammo(&a.encoded.encoded_concepts, concepts);
            let (labelled_mammo, labelled_nonmammo) = split_mammo(&a.encoded.labelled_concepts, concepts);
            LayerEvolutionRow {
                layer_name: a.record.layer_name.clone(),
                stage: a.record.stage_tag,
                tau: a.threshold.tau,
                encoded_mammo,
                encoded_nonmammo,
                labelled_mammo,
                labelled_nonmammo,
                activated_neurons: a.encoded.activated_neurons.len(),
                neuron_count: a.similarity.neuron_count(),
            }
        })
        .collect();
    LayerEvolution {
        bundle_id: bundle_id.to_string(),
        layers,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub layer_name: String,
    pub basis: SetBasis,
    /// Count of encoded concepts in every broad category (zeros included).
    pub counts: BTreeMap<BroadCategory, usize>,
    /// Up to three non-empty categories, largest first, ties by name.
    pub top3: Vec<(BroadCategory, usize)>,
}

pub fn category_breakdown_of(
    layer_name: &str,
    basis: SetBasis,
    indices: &BTreeSet<usize>,
    concepts: &ConceptSet,
) -> CategoryBreakdown {
    let mut counts: BTreeMap<BroadCategory, usize> = BroadCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for &j in indices {
        *counts.entry(concepts.entries()[j].broad_category).or_default() += 1;
    }
    let mut ranked: Vec<(BroadCategory, usize)> =
        counts.iter().filter(|(_, &n)| n > 0).map(|(&c, &n)| (c, n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.name().cmp(b.0.name())));
    ranked.truncate(3);
    CategoryBreakdown {
        layer_name: layer_name.to_string(),
        basis,
        counts,
        top3: ranked,
    }
}

pub fn category_breakdown(encoded: &EncodedSet, concepts: &ConceptSet, basis: SetBasis) -> CategoryBreakdown {
    category_breakdown_of(&encoded.layer_name, basis, basis.pick(encoded), concepts)
}

/// Encoded concepts carrying the task tag.
pub fn task_concept_counts(encoded: &BTreeSet<usize>, concepts: &ConceptSet, task: Task) -> usize {
    encoded
        .iter()
        .filter(|&&j| concepts.entries()[j].has_task(task))
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskCountRow {
    pub layer_name: String,
    pub mass: usize,
    pub calcification: usize,
    pub density: usize,
}

pub fn task_count_rows(analyses: &[LayerAnalysis], concepts: &ConceptSet, basis: SetBasis) -> Vec<TaskCountRow> {
    analyses
        .iter()
        .map(|a| {
            let e = basis.pick(&a.encoded);
            TaskCountRow {
                layer_name: a.record.layer_name.clone(),
                mass: task_concept_counts(e, concepts, Task::Mass),
                calcification: task_concept_counts(e, concepts, Task::Calcification),
                density: task_concept_counts(e, concepts, Task::Density),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerComparison {
    pub layer_a: String,
    pub layer_b: String,
    pub threshold: LayerThreshold,
    pub encoded_a: BTreeSet<usize>,
    pub encoded_b: BTreeSet<usize>,
    pub unique_to_a: BTreeSet<usize>,
    pub unique_to_b: BTreeSet<usize>,
    pub common: BTreeSet<usize>,
}

/// Positionally aligned layer comparison of two models under a shared threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model_a: String,
    pub model_b: String,
    pub task: Option<Task>,
    pub basis: SetBasis,
    pub layers: Vec<LayerComparison>,
}

fn filter_task(set: BTreeSet<usize>, concepts: &ConceptSet, task: Option<Task>) -> BTreeSet<usize> {
    match task {
        Some(t) => set.into_iter().filter(|&j| concepts.entries()[j].has_task(t)).collect(),
        None => set,
    }
}

pub fn compare_layer(
    a: &SimilarityMatrix,
    b: &SimilarityMatrix,
    concepts: &ConceptSet,
    task: Option<Task>,
    basis: SetBasis,
) -> Result<LayerComparison> {
    if a.concept_count() != b.concept_count() {
        return Err(Error::ConceptSetMismatch(format!(
            "{} versus {} concepts",
            a.concept_count(),
            b.concept_count()
        )));
    }
    let threshold = pair_threshold(a, b)?;
    let encoded_a = filter_task(basis.pick(&encoded_set(a, threshold.tau)).clone(), concepts, task);
    let encoded_b = filter_task(basis.pick(&encoded_set(b, threshold.tau)).clone(), concepts, task);
    Ok(LayerComparison {
        layer_a: a.layer_name.clone(),
        layer_b: b.layer_name.clone(),
        unique_to_a: encoded_a.difference(&encoded_b).copied().collect(),
        unique_to_b: encoded_b.difference(&encoded_a).copied().collect(),
        common: encoded_a.intersection(&encoded_b).copied().collect(),
        threshold,
        encoded_a,
        encoded_b,
    })
}

pub fn compare_similarities(
    model_a: &str,
    model_b: &str,
    a: &[SimilarityMatrix],
    b: &[SimilarityMatrix],
    concepts: &ConceptSet,
    task: Option<Task>,
    basis: SetBasis,
) -> Result<ModelComparison> {
    if a.len() != b.len() {
        return Err(Error::LayerNotFound(format!(
            "cannot align {} layers of '{model_a}' with {} layers of '{model_b}'",
            a.len(),
            b.len()
        )));
    }
    let layers = a
        .iter()
        .zip(b)
        .map(|(sa, sb)| compare_layer(sa, sb, concepts, task, basis))
        .collect::<Result<_>>()?;
    Ok(ModelComparison {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        task,
        basis,
        layers,
    })
}

/// Checks that two bundles were dissected on the same probe and concept set.
pub fn check_comparable(a: &ValidatedBundle, b: &ValidatedBundle) -> Result<()> {
    let (ma, mb) = (a.manifest(), b.manifest());
    if ma.image_count != mb.image_count || ma.probe_id != mb.probe_id {
        return Err(Error::ProbeMismatch(format!(
            "'{}' uses probe '{}' with {} images, '{}' uses probe '{}' with {} images",
            ma.bundle_id, ma.probe_id, ma.image_count, mb.bundle_id, mb.probe_id, mb.image_count
        )));
    }
    let same = a.concepts().len() == b.concepts().len()
        && a.concepts()
            .entries()
            .iter()
            .zip(b.concepts().entries())
            .all(|(x, y)| x.text == y.text);
    if !same {
        return Err(Error::ConceptSetMismatch(format!(
            "'{}' and '{}' use different concept sets",
            ma.bundle_id, mb.bundle_id
        )));
    }
    Ok(())
}

/// Compares the given layers of two bundles position by position.
pub fn compare_models(
    a: &ValidatedBundle,
    b: &ValidatedBundle,
    params: &SimParams,
    layers_a: &[usize],
    layers_b: &[usize],
    task: Option<Task>,
    basis: SetBasis,
) -> Result<ModelComparison> {
    check_comparable(a, b)?;
    let sa = layer_similarities(a, params, layers_a)?;
    let sb = layer_similarities(b, params, layers_b)?;
    compare_similarities(
        &a.manifest().model_id,
        &b.manifest().model_id,
        &sa,
        &sb,
        a.concepts(),
        task,
        basis,
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnedMissed {
    pub learned: usize,
    pub missed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub basis: SetBasis,
    pub learned: BTreeSet<usize>,
    pub missed: BTreeSet<usize>,
    pub missed_mammo: BTreeSet<usize>,
    /// Missed mammography concepts with no textual overlap with any learned concept.
    pub missed_mammo_distinct: BTreeSet<usize>,
    pub per_category: BTreeMap<BroadCategory, LearnedMissed>,
}

impl CoverageReport {
    pub fn from_learned(learned: BTreeSet<usize>, concepts: &ConceptSet) -> Self {
        Self::from_learned_with(learned, concepts, SetBasis::Encoded)
    }

    fn from_learned_with(learned: BTreeSet<usize>, concepts: &ConceptSet, basis: SetBasis) -> Self {
        let entries = concepts.entries();
        let missed: BTreeSet<usize> = (0..entries.len()).filter(|j| !learned.contains(j)).collect();
        let missed_mammo: BTreeSet<usize> = missed
            .iter()
            .copied()
            .filter(|&j| entries[j].is_mammography())
            .collect();
        let missed_mammo_distinct = missed_mammo
            .iter()
            .copied()
            .filter(|&j| {
                !learned
                    .iter()
                    .any(|&l| textual_overlap(&entries[j].text, &entries[l].text))
            })
            .collect();
        let mut per_category: BTreeMap<BroadCategory, LearnedMissed> = BroadCategory::ALL
            .iter()
            .map(|&c| (c, LearnedMissed::default()))
            .collect();
        for (j, e) in entries.iter().enumerate() {
            let slot = per_category.entry(e.broad_category).or_default();
            if learned.contains(&j) {
                slot.learned += 1;
            } else {
                slot.missed += 1;
            }
        }
        CoverageReport {
            basis,
            learned,
            missed,
            missed_mammo,
            missed_mammo_distinct,
            per_category,
        }
    }

    /// Learned means present in the chosen set at any of the given layers.
    pub fn from_encoded<'a>(
        sets: impl IntoIterator<Item = &'a EncodedSet>,
        concepts: &ConceptSet,
        basis: SetBasis,
    ) -> Self {
        let learned = sets.into_iter().flat_map(|e| basis.pick(e).iter().copied()).collect();
        Self::from_learned_with(learned, concepts, basis)
    }
}

pub fn coverage_report(analyses: &[LayerAnalysis], concepts: &ConceptSet, basis: SetBasis) -> CoverageReport {
    CoverageReport::from_encoded(analyses.iter().map(|a| &a.encoded), concepts, basis)
}
