//! Browser bindings: dissect a synthetic bundle and render its figures.
//!
//! Every method returns JSON or SVG text; errors surface as JS strings.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use mammo_dissect::analytics::{layer_evolution, LayerEvolutionRow};
use mammo_dissect::exchange::{synthesize, ConceptSource, PlantedNeuron, SynthSpec, ValidatedBundle};
use mammo_dissect::labeling::{label_neurons, neuron_card};
use mammo_dissect::pipeline::{analyze_layers, select_layers, LayerAnalysis};
use mammo_dissect::report::{label_cloud, render_svg, FigurePayload, FigureSpec};
use mammo_dissect::simcore::SimParams;

const CLOUD_WORDS: usize = 40;

/// Options accepted by [`Dissection::new`]; missing fields take these defaults.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub seed: u64,
    pub images: usize,
    pub planted: usize,
    pub noise: f64,
    pub shipped_concepts: bool,
    pub params: SimParams,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            seed: 1,
            images: 400,
            planted: 10,
            noise: 0.01,
            shipped_concepts: false,
            params: SimParams::default(),
        }
    }
}

#[derive(Serialize)]
struct NeuronRow {
    neuron: usize,
    concept: String,
    similarity: f64,
    activated: bool,
    planted: Option<String>,
}

#[derive(Serialize)]
struct LayerSummary<'a> {
    #[serde(flatten)]
    evolution: &'a LayerEvolutionRow,
    neurons: Vec<NeuronRow>,
}

#[derive(Serialize)]
struct Summary<'a> {
    concepts: usize,
    images: usize,
    planted: usize,
    recovered: usize,
    layers: Vec<LayerSummary<'a>>,
}

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// A dissected synthetic bundle held in memory between calls.
#[wasm_bindgen]
pub struct Dissection {
    bundle: ValidatedBundle,
    planted: Vec<PlantedNeuron>,
    analyses: Vec<LayerAnalysis>,
}

#[wasm_bindgen]
impl Dissection {
    /// Generates a bundle from JSON options and labels every neuron.
    #[wasm_bindgen(constructor)]
    pub fn new(options_json: &str) -> Result<Dissection, String> {
        let opts: Options = if options_json.trim().is_empty() {
            Options::default()
        } else {
            serde_json::from_str(options_json).map_err(text)?
        };
        let mut spec = SynthSpec {
            seed: opts.seed,
            n_images: opts.images,
            noise: opts.noise,
            ..SynthSpec::default()
        };
        if opts.shipped_concepts {
            spec.concepts = ConceptSource::Shipped;
        }
        spec.plant_evenly(opts.planted).map_err(text)?;
        let bundle = synthesize(&spec).map_err(text)?.into_bundle().map_err(text)?;
        let layers = select_layers(&bundle, &[]).map_err(text)?;
        let analyses = analyze_layers(&bundle, &opts.params, &layers).map_err(text)?;
        Ok(Dissection {
            bundle,
            planted: spec.planted,
            analyses,
        })
    }

    #[wasm_bindgen(js_name = layerCount)]
    pub fn layer_count(&self) -> usize {
        self.analyses.len()
    }

    /// Per-layer thresholds, counts and neuron labels, plus planted-label recovery.
    pub fn summary(&self) -> Result<String, String> {
        let concepts = self.bundle.concepts();
        let evo = layer_evolution(&self.bundle.manifest().bundle_id, &self.analyses, concepts);
        let mut recovered = 0;
        let mut layers = Vec::new();
        for (a, row) in self.analyses.iter().zip(&evo.layers) {
            let neurons = label_neurons(&a.similarity, concepts)
                .into_iter()
                .map(|l| {
                    let planted = self
                        .planted
                        .iter()
                        .find(|p| p.layer == a.layer_index && p.neuron == l.neuron)
                        .map(|p| {
                            if p.concept == l.concept {
                                recovered += 1;
                            }
                            concepts.text(p.concept).to_string()
                        });
                    NeuronRow {
                        neuron: l.neuron,
                        activated: a.encoded.activated_neurons.contains(&l.neuron),
                        concept: l.concept_text,
                        similarity: l.similarity,
                        planted,
                    }
                })
                .collect();
            layers.push(LayerSummary {
                evolution: row,
                neurons,
            });
        }
        let summary = Summary {
            concepts: concepts.len(),
            images: self.bundle.image_count(),
            planted: self.planted.len(),
            recovered,
            layers,
        };
        serde_json::to_string(&summary).map_err(text)
    }

    /// Word cloud of the distinct labels of a layer's activated neurons.
    #[wasm_bindgen(js_name = wordcloudSvg)]
    pub fn wordcloud_svg(&self, layer: usize, seed: u32) -> Result<String, String> {
        let a = self.analyses.get(layer).ok_or_else(|| format!("no layer {layer}"))?;
        let words = label_cloud(a, self.bundle.concepts(), CLOUD_WORDS);
        let spec = FigureSpec::new(
            format!("Concepts of {}", a.record.layer_name),
            FigurePayload::Wordcloud {
                words,
                seed: seed.into(),
            },
        );
        render_svg(&spec).map_err(text)
    }

    /// Top concepts and top images of one neuron.
    #[wasm_bindgen(js_name = neuronSvg)]
    pub fn neuron_svg(&self, layer: usize, neuron: usize, top: usize) -> Result<String, String> {
        let a = self.analyses.get(layer).ok_or_else(|| format!("no layer {layer}"))?;
        let acts = self.bundle.layer_activations(a.layer_index).map_err(text)?;
        let card = neuron_card(&a.similarity, acts, self.bundle.concepts(), neuron, top, top, None).map_err(text)?;
        let spec = FigureSpec::new(
            format!("{} neuron {neuron}", a.record.layer_name),
            FigurePayload::NeuronCard { card },
        );
        render_svg(&spec).map_err(text)
    }
}
