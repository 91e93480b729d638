//! Deterministic synthetic bundles with planted neuron→concept relationships.
//!
//! Embeddings are Gaussian. A planted neuron's activation vector is twice the
//! planted concept's column of the concept-activation matrix plus uniform noise
//! in `[-noise, noise]`, so with zero noise its ranking over images equals the
//! concept's ranking exactly. Unplanted neurons draw activations uniformly.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bundle::{BundleManifest, LayerRecord, StageTag, ValidatedBundle, FORMAT_VERSION};
use super::npy::{write_matrix, Precision};
use super::{ExchangeError, Matrix};
use crate::conceptset::ConceptSet;
use crate::io_util::write_atomic_bytes;
use crate::simcore::concept_activation_matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptSource {
    /// The 763-concept file shipped with the crate.
    Shipped,
    /// `n` generated concepts cycling through the shipped subcategories.
    Synthetic(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthLayer {
    pub name: String,
    pub neurons: usize,
    pub stage: StageTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedNeuron {
    pub layer: usize,
    pub neuron: usize,
    pub concept: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub bundle_id: String,
    pub model_id: String,
    pub probe_id: String,
    pub n_images: usize,
    pub dim: usize,
    pub concepts: ConceptSource,
    pub layers: Vec<SynthLayer>,
    pub planted: Vec<PlantedNeuron>,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            bundle_id: "synthetic".into(),
            model_id: "synthetic-model".into(),
            probe_id: "synthetic-probe".into(),
            n_images: 400,
            dim: 32,
            concepts: ConceptSource::Synthetic(48),
            layers: vec![
                SynthLayer {
                    name: "early".into(),
                    neurons: 16,
                    stage: StageTag::Early,
                },
                SynthLayer {
                    name: "middle".into(),
                    neurons: 24,
                    stage: StageTag::Middle,
                },
                SynthLayer {
                    name: "late".into(),
                    neurons: 32,
                    stage: StageTag::Late,
                },
            ],
            planted: Vec::new(),
            noise: 0.01,
        }
    }
}

impl SynthSpec {
    /// Plants `per_layer` neurons in every layer, each mirroring a distinct
    /// concept drawn deterministically from `seed`.
    pub fn plant_evenly(&mut self, per_layer: usize) -> Result<(), ExchangeError> {
        let n_concepts = match self.concepts {
            ConceptSource::Shipped => ConceptSet::shipped().len(),
            ConceptSource::Synthetic(n) => n,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_91a7);
        self.planted.clear();
        for (li, layer) in self.layers.iter().enumerate() {
            if per_layer > layer.neurons || per_layer > n_concepts {
                return Err(ExchangeError::InvalidSpec(format!(
                    "cannot plant {per_layer} neurons in layer '{}' ({} neurons, {n_concepts} concepts)",
                    layer.name, layer.neurons
                )));
            }
            let neurons = rand::seq::index::sample(&mut rng, layer.neurons, per_layer).into_vec();
            let concepts = rand::seq::index::sample(&mut rng, n_concepts, per_layer).into_vec();
            for (neuron, concept) in neurons.into_iter().zip(concepts) {
                self.planted.push(PlantedNeuron {
                    layer: li,
                    neuron,
                    concept,
                });
            }
        }
        Ok(())
    }
}

/// In-memory result of [`synthesize`].
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub manifest: BundleManifest,
    pub concepts: ConceptSet,
    pub image_embeddings: Matrix,
    pub text_embeddings: Matrix,
    pub layers: Vec<Matrix>,
}

impl SyntheticData {
    /// Wraps the data as a validated in-memory bundle.
    pub fn into_bundle(self) -> Result<ValidatedBundle, ExchangeError> {
        ValidatedBundle::from_memory(
            self.manifest,
            self.concepts,
            self.image_embeddings,
            self.text_embeddings,
            self.layers,
        )
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Builds a synthetic bundle in memory; a pure function of `spec`.
pub fn synthesize(spec: &SynthSpec) -> Result<SyntheticData, ExchangeError> {
    let bad = |m: String| Err(ExchangeError::InvalidSpec(m));
    if spec.n_images == 0 || spec.dim == 0 {
        return bad("n_images and dim must be positive".into());
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return bad(format!("noise must be finite and non-negative, got {}", spec.noise));
    }
    let concepts = match spec.concepts {
        ConceptSource::Shipped => ConceptSet::shipped(),
        ConceptSource::Synthetic(n) => ConceptSet::synthetic(n)?,
    };
    let m = concepts.len();
    let mut seen = HashSet::new();
    for p in &spec.planted {
        let Some(layer) = spec.layers.get(p.layer) else {
            return bad(format!("planted layer index {} out of range", p.layer));
        };
        if p.neuron >= layer.neurons {
            return bad(format!(
                "planted neuron {} out of range for layer '{}'",
                p.neuron, layer.name
            ));
        }
        if p.concept >= m {
            return bad(format!("planted concept index {} out of range (M = {m})", p.concept));
        }
        if !seen.insert((p.layer, p.neuron)) {
            return bad(format!("neuron {} of layer '{}' planted twice", p.neuron, layer.name));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let image_embeddings = gaussian(&mut rng, spec.n_images, spec.dim);
    let text_embeddings = gaussian(&mut rng, m, spec.dim);
    let p = concept_activation_matrix(&image_embeddings, &text_embeddings)
        .map_err(|e| ExchangeError::InvalidSpec(e.to_string()))?;

    let mut layers = Vec::with_capacity(spec.layers.len());
    for (li, layer) in spec.layers.iter().enumerate() {
        let k = layer.neurons;
        let mut data: Vec<f64> = (0..spec.n_images * k).map(|_| rng.random::<f64>()).collect();
        for planted in spec.planted.iter().filter(|p| p.layer == li) {
            for i in 0..spec.n_images {
                let jitter = if spec.noise > 0.0 {
                    spec.noise * (2.0 * rng.random::<f64>() - 1.0)
                } else {
                    0.0
                };
                data[i * k + planted.neuron] = 2.0 * p.values.get(i, planted.concept) + jitter;
            }
        }
        layers.push(Matrix::from_raw(spec.n_images, k, data));
    }

    let manifest = BundleManifest {
        format_version: FORMAT_VERSION,
        bundle_id: spec.bundle_id.clone(),
        model_id: spec.model_id.clone(),
        probe_id: spec.probe_id.clone(),
        image_count: spec.n_images,
        image_paths: Some((0..spec.n_images).map(|i| format!("images/probe_{i:05}.png")).collect()),
        image_embeddings_file: "image_embeddings.npy".into(),
        text_embeddings_file: "text_embeddings.npy".into(),
        concept_set_file: "concepts.csv".into(),
        embedding_dim: spec.dim,
        layers: spec
            .layers
            .iter()
            .map(|l| LayerRecord {
                layer_name: l.name.clone(),
                neuron_count: l.neurons,
                activations_file: format!("activations_{}.npy", l.name),
                stage_tag: l.stage,
            })
            .collect(),
    };
    manifest.check()?;

    Ok(SyntheticData {
        manifest,
        concepts,
        image_embeddings,
        text_embeddings,
        layers,
    })
}

/// Writes a synthetic bundle (manifest.json plus its files) into `dir`.
pub fn generate_synthetic_bundle(dir: impl AsRef<Path>, spec: &SynthSpec) -> Result<BundleManifest, ExchangeError> {
    let dir = dir.as_ref();
    let data = synthesize(spec)?;
    let m = &data.manifest;
    write_matrix(
        &data.image_embeddings,
        dir.join(&m.image_embeddings_file),
        Precision::F64,
    )?;
    write_matrix(&data.text_embeddings, dir.join(&m.text_embeddings_file), Precision::F64)?;
    for (rec, table) in m.layers.iter().zip(&data.layers) {
        write_matrix(table, dir.join(&rec.activations_file), Precision::F64)?;
    }
    let concepts_path = dir.join(&m.concept_set_file);
    write_atomic_bytes(&concepts_path, data.concepts.to_csv_string().as_bytes())
        .map_err(|e| ExchangeError::io(&concepts_path, e))?;
    let manifest_path = dir.join("manifest.json");
    write_atomic_bytes(&manifest_path, m.to_json().as_bytes()).map_err(|e| ExchangeError::io(&manifest_path, e))?;
    Ok(data.manifest)
}
