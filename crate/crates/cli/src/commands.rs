use std::path::{Path, PathBuf};

use serde::Serialize;

use mammo_dissect::analytics::{
    category_breakdown, check_comparable, compare_similarities, coverage_report, layer_evolution, task_count_rows,
    CategoryBreakdown, CoverageReport, LayerEvolution, TaskCountRow,
};
use mammo_dissect::conceptset::{BroadCategory, ConceptSet};
use mammo_dissect::exchange::{
    generate_synthetic_bundle, load_bundle, write_matrix, ConceptSource, Precision, StageTag, SynthLayer, SynthSpec,
    ValidatedBundle,
};
use mammo_dissect::labeling::{label_neurons, neuron_card, NeuronLabel};
use mammo_dissect::pipeline::{analyze_layers, layer_similarities, select_layers, LayerAnalysis};
use mammo_dissect::report::{
    emit_csv, emit_json, emit_svg, label_cloud, product_path, ComparisonTable, CoverageTable, CsvProduct,
    FigurePayload, FigureSpec, Series,
};
use mammo_dissect::simcore::SimParams;
use mammo_dissect::thresholds::layer_threshold;

use crate::config::{resolve_with_bundle, Format, Resolved, RunConfig};
use crate::{CliError, CompareArgs, NeuronArgs, SynthArgs};

const CLOUD_WORDS: usize = 60;

/// Writes products under one output root and counts them.
struct Sink<'a> {
    res: &'a Resolved,
    bundle_id: String,
    written: usize,
}

impl<'a> Sink<'a> {
    fn new(res: &'a Resolved, bundle_id: &str) -> Self {
        Sink {
            res,
            bundle_id: bundle_id.to_string(),
            written: 0,
        }
    }

    fn path(&self, layer: Option<&str>, product: &str, ext: &str) -> PathBuf {
        product_path(&self.res.out, &self.bundle_id, layer, product, ext)
    }

    fn csv<P: CsvProduct + ?Sized>(&mut self, layer: Option<&str>, product: &str, value: &P) -> Result<(), CliError> {
        if self.res.wants(Format::Csv) {
            emit_csv(value, self.path(layer, product, "csv"))?;
            self.written += 1;
        }
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, layer: Option<&str>, product: &str, value: &T) -> Result<(), CliError> {
        if self.res.wants(Format::Json) {
            emit_json(value, self.path(layer, product, "json"))?;
            self.written += 1;
        }
        Ok(())
    }

    fn svg(&mut self, layer: Option<&str>, product: &str, spec: &FigureSpec) -> Result<(), CliError> {
        if self.res.wants(Format::Svg) {
            emit_svg(spec, self.path(layer, product, "svg"))?;
            self.written += 1;
        }
        Ok(())
    }

    fn npy(&mut self, layer: Option<&str>, product: &str, m: &mammo_dissect::Matrix) -> Result<(), CliError> {
        write_matrix(m, self.path(layer, product, "npy"), Precision::F64)?;
        self.written += 1;
        Ok(())
    }

    fn done(self, what: &str) {
        println!(
            "{what}: wrote {} file(s) under {}",
            self.written,
            self.res.out.join(&self.bundle_id).display()
        );
    }
}

fn open(path: &Path, concepts: Option<&Path>) -> Result<ValidatedBundle, CliError> {
    if !path.is_file() {
        return Err(CliError::MissingArtifact(format!("bundle manifest {}", path.display())));
    }
    let bundle = load_bundle(path)?;
    match concepts {
        Some(c) => Ok(bundle.with_concepts(ConceptSet::load(c)?)?),
        None => Ok(bundle),
    }
}

fn open_resolved(res: &Resolved) -> Result<ValidatedBundle, CliError> {
    open(&res.bundle, res.concepts.as_deref())
}

fn validate_params(bundle: &ValidatedBundle, params: &SimParams) -> Result<(), CliError> {
    params
        .validate(bundle.image_count(), bundle.concepts().len())
        .map_err(|e| mammo_dissect::Error::from(e).into())
}

fn analyze(res: &Resolved) -> Result<(ValidatedBundle, Vec<LayerAnalysis>), CliError> {
    let bundle = open_resolved(res)?;
    validate_params(&bundle, &res.params)?;
    let layers = select_layers(&bundle, &res.layers)?;
    let analyses = analyze_layers(&bundle, &res.params, &layers)?;
    Ok((bundle, analyses))
}

fn parse_layer(spec: &str) -> Result<SynthLayer, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("layer '{spec}' must be name:neurons[:stage]"));
    if parts.len() < 2 || parts.len() > 3 || parts[0].is_empty() {
        return Err(bad());
    }
    let neurons = parts[1].parse().map_err(|_| bad())?;
    let stage = match parts.get(2) {
        Some(s) => s.parse::<StageTag>().map_err(CliError::Usage)?,
        None => parts[0].parse::<StageTag>().unwrap_or(StageTag::Other),
    };
    Ok(SynthLayer {
        name: parts[0].to_string(),
        neurons,
        stage,
    })
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut spec = SynthSpec {
        seed: a.seed,
        bundle_id: a.bundle_id.clone(),
        model_id: a.model_id.clone(),
        probe_id: a.probe_id.clone(),
        n_images: a.images,
        dim: a.dim,
        concepts: if a.shipped_concepts {
            ConceptSource::Shipped
        } else {
            ConceptSource::Synthetic(a.concept_count)
        },
        layers: a.layers.iter().map(|l| parse_layer(l)).collect::<Result<_, _>>()?,
        planted: Vec::new(),
        noise: a.noise,
    };
    spec.plant_evenly(a.planted)?;
    let manifest = generate_synthetic_bundle(&a.out, &spec)?;
    let planted_path = a.out.join("planted.json");
    emit_json(&spec.planted, &planted_path)?;
    println!(
        "synth: bundle '{}' with {} images, {} layers, {} planted neurons at {}",
        manifest.bundle_id,
        manifest.image_count,
        manifest.layers.len(),
        spec.planted.len(),
        a.out.join("manifest.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimilarityRecord<'a> {
    bundle_id: &'a str,
    model_id: &'a str,
    probe_id: &'a str,
    layer_name: &'a str,
    neurons: usize,
    concepts: usize,
    params: SimParams,
}

pub fn similarities(res: &Resolved) -> Result<(), CliError> {
    let bundle = open_resolved(res)?;
    validate_params(&bundle, &res.params)?;
    let layers = select_layers(&bundle, &res.layers)?;
    let sims = layer_similarities(&bundle, &res.params, &layers)?;
    let m = bundle.manifest();
    let mut sink = Sink::new(res, &m.bundle_id);
    for s in &sims {
        let layer = Some(s.layer_name.as_str());
        sink.npy(layer, "similarity", &s.values)?;
        let record = SimilarityRecord {
            bundle_id: &m.bundle_id,
            model_id: &m.model_id,
            probe_id: &m.probe_id,
            layer_name: &s.layer_name,
            neurons: s.neuron_count(),
            concepts: s.concept_count(),
            params: s.params,
        };
        emit_json(&record, sink.path(layer, "similarity_params", "json"))?;
        sink.written += 1;
    }
    sink.done("similarities");
    Ok(())
}

fn write_labels(sink: &mut Sink, analyses: &[LayerAnalysis], concepts: &ConceptSet) -> Result<(), CliError> {
    for a in analyses {
        let labels: Vec<NeuronLabel> = label_neurons(&a.similarity, concepts);
        let layer = Some(a.record.layer_name.as_str());
        sink.csv(layer, "labels", labels.as_slice())?;
        sink.json(layer, "labels", &labels)?;
    }
    Ok(())
}

pub fn label(res: &Resolved) -> Result<(), CliError> {
    let (bundle, analyses) = analyze(res)?;
    let mut sink = Sink::new(res, &bundle.manifest().bundle_id);
    write_labels(&mut sink, &analyses, bundle.concepts())?;
    sink.done("label");
    Ok(())
}

#[derive(Serialize)]
struct ThresholdRecord<'a> {
    layer_name: &'a str,
    stage: StageTag,
    threshold: &'a mammo_dissect::thresholds::LayerThreshold,
    neuron_count: usize,
    activated_neurons: usize,
    encoded_concepts: usize,
    labelled_concepts: usize,
}

fn layer_names(analyses: &[LayerAnalysis]) -> Vec<String> {
    analyses.iter().map(|a| a.record.layer_name.clone()).collect()
}

fn tau_figure(title: &str, x_labels: Vec<String>, series: Vec<Series>) -> FigureSpec {
    FigureSpec::new(
        title,
        FigurePayload::Line {
            x_labels,
            series,
            y_label: "mean similarity (tau)".into(),
        },
    )
}

fn write_thresholds(sink: &mut Sink, analyses: &[LayerAnalysis]) -> Result<(), CliError> {
    sink.csv(None, "thresholds", analyses)?;
    let records: Vec<ThresholdRecord> = analyses
        .iter()
        .map(|a| ThresholdRecord {
            layer_name: &a.record.layer_name,
            stage: a.record.stage_tag,
            threshold: &a.threshold,
            neuron_count: a.similarity.neuron_count(),
            activated_neurons: a.encoded.activated_neurons.len(),
            encoded_concepts: a.encoded.encoded_concepts.len(),
            labelled_concepts: a.encoded.labelled_concepts.len(),
        })
        .collect();
    sink.json(None, "thresholds", &records)?;
    for a in analyses {
        sink.json(Some(&a.record.layer_name), "encoded", &a.encoded)?;
    }
    if !analyses.is_empty() {
        let series = vec![Series {
            name: sink.bundle_id.clone(),
            values: analyses.iter().map(|a| a.threshold.tau).collect(),
        }];
        sink.svg(
            None,
            "thresholds",
            &tau_figure("Mean layer similarity", layer_names(analyses), series),
        )?;
    }
    Ok(())
}

pub fn thresholds(res: &Resolved) -> Result<(), CliError> {
    let (bundle, analyses) = analyze(res)?;
    let mut sink = Sink::new(res, &bundle.manifest().bundle_id);
    write_thresholds(&mut sink, &analyses)?;
    sink.done("thresholds");
    Ok(())
}

fn write_coverage(sink: &mut Sink, report: &CoverageReport, concepts: &ConceptSet) -> Result<(), CliError> {
    sink.csv(None, "coverage", &CoverageTable { report, concepts })?;
    sink.json(None, "coverage", report)?;
    let cats: Vec<BroadCategory> = report.per_category.keys().copied().collect();
    let spec = FigureSpec::new(
        "Learned and missed concepts per broad category",
        FigurePayload::GroupedBars {
            x_labels: cats.iter().map(|c| c.name().to_string()).collect(),
            series: vec![
                Series {
                    name: "learned".into(),
                    values: cats.iter().map(|c| report.per_category[c].learned as f64).collect(),
                },
                Series {
                    name: "missed".into(),
                    values: cats.iter().map(|c| report.per_category[c].missed as f64).collect(),
                },
            ],
            y_label: "concepts".into(),
        },
    );
    sink.svg(None, "coverage", &spec)
}

pub fn coverage(res: &Resolved) -> Result<(), CliError> {
    let (bundle, analyses) = analyze(res)?;
    let report = coverage_report(&analyses, bundle.concepts(), res.basis);
    let mut sink = Sink::new(res, &bundle.manifest().bundle_id);
    write_coverage(&mut sink, &report, bundle.concepts())?;
    sink.done("coverage");
    println!(
        "coverage: {} learned, {} missed, {} distinct missed mammography concepts",
        report.learned.len(),
        report.missed.len(),
        report.missed_mammo_distinct.len()
    );
    Ok(())
}

pub fn compare(a: &CompareArgs, config: &RunConfig) -> Result<(), CliError> {
    let res = crate::config::resolve(&a.common, config)?;
    let path_b = a
        .bundle_b
        .clone()
        .or_else(|| config.bundle_b.clone())
        .ok_or_else(|| CliError::Usage("--bundle-b is required (flag or config)".into()))?;
    let task = a.task.or(config.task);
    let res_b = resolve_with_bundle(&a.common, config, path_b.clone());
    let bundle_a = open_resolved(&res)?;
    let bundle_b = open(&path_b, res.concepts.as_deref())?;
    check_comparable(&bundle_a, &bundle_b)?;
    validate_params(&bundle_a, &res.params)?;
    let layers_b_names = if a.layers_b.is_empty() {
        if config.layers_b.is_empty() {
            res_b.layers.clone()
        } else {
            config.layers_b.clone()
        }
    } else {
        a.layers_b.clone()
    };
    let la = select_layers(&bundle_a, &res.layers)?;
    let lb = select_layers(&bundle_b, &layers_b_names)?;
    let sa = layer_similarities(&bundle_a, &res.params, &la)?;
    let sb = layer_similarities(&bundle_b, &res.params, &lb)?;
    let (ma, mb) = (bundle_a.manifest(), bundle_b.manifest());
    let comparison = compare_similarities(
        &ma.model_id,
        &mb.model_id,
        &sa,
        &sb,
        bundle_a.concepts(),
        task,
        res.basis,
    )?;

    let dir_id = format!("{}__vs__{}", ma.bundle_id, mb.bundle_id);
    let mut sink = Sink::new(&res, &dir_id);
    sink.csv(
        None,
        "comparison",
        &ComparisonTable {
            comparison: &comparison,
            concepts: bundle_a.concepts(),
        },
    )?;
    sink.json(None, "comparison", &comparison)?;
    if !comparison.layers.is_empty() {
        let x_labels: Vec<String> = comparison
            .layers
            .iter()
            .map(|l| l.threshold.layer_name.clone())
            .collect();
        let means = |sims: &[mammo_dissect::simcore::SimilarityMatrix]| -> Result<Vec<f64>, CliError> {
            sims.iter()
                .map(|s| Ok(layer_threshold(s).map_err(mammo_dissect::Error::from)?.tau))
                .collect()
        };
        let series = vec![
            Series {
                name: ma.model_id.clone(),
                values: means(&sa)?,
            },
            Series {
                name: mb.model_id.clone(),
                values: means(&sb)?,
            },
        ];
        sink.svg(
            None,
            "thresholds",
            &tau_figure("Mean layer similarity", x_labels.clone(), series),
        )?;
        let count = |f: &dyn Fn(&mammo_dissect::analytics::LayerComparison) -> usize| {
            comparison.layers.iter().map(|l| f(l) as f64).collect::<Vec<f64>>()
        };
        let spec = FigureSpec::new(
            "Encoded concepts under the shared threshold",
            FigurePayload::GroupedBars {
                x_labels,
                series: vec![
                    Series {
                        name: format!("unique to {}", ma.model_id),
                        values: count(&|l| l.unique_to_a.len()),
                    },
                    Series {
                        name: format!("unique to {}", mb.model_id),
                        values: count(&|l| l.unique_to_b.len()),
                    },
                    Series {
                        name: "common".into(),
                        values: count(&|l| l.common.len()),
                    },
                ],
                y_label: "concepts".into(),
            },
        );
        sink.svg(None, "comparison", &spec)?;
    }
    sink.done("compare");
    Ok(())
}

pub fn neuron(a: &NeuronArgs, config: &RunConfig) -> Result<(), CliError> {
    let res = crate::config::resolve(&a.common, config)?;
    let bundle = open_resolved(&res)?;
    validate_params(&bundle, &res.params)?;
    let index = match &a.layer {
        Some(name) => select_layers(&bundle, std::slice::from_ref(name))?[0],
        None => *select_layers(&bundle, &res.layers)?
            .last()
            .ok_or_else(|| CliError::Data("bundle has no layers".into()))?,
    };
    let s = layer_similarities(&bundle, &res.params, &[index])?.remove(0);
    let top = a.top.or(config.top).unwrap_or(5);
    let images = a.images.or(config.images).unwrap_or(5);
    let card = neuron_card(
        &s,
        bundle.layer_activations(index)?,
        bundle.concepts(),
        a.id,
        top,
        images,
        bundle.image_paths(),
    )?;
    let mut sink = Sink::new(&res, &bundle.manifest().bundle_id);
    let layer = Some(s.layer_name.as_str());
    let product = format!("neuron_{}", a.id);
    sink.csv(layer, &product, &card)?;
    sink.json(layer, &product, &card)?;
    let title = format!("Neuron {} of {}: top concepts and images", a.id, s.layer_name);
    sink.svg(
        layer,
        &product,
        &FigureSpec::new(title, FigurePayload::NeuronCard { card }),
    )?;
    sink.done("neuron");
    Ok(())
}

fn evolution_figures(sink: &mut Sink, evo: &LayerEvolution) -> Result<(), CliError> {
    if evo.layers.is_empty() {
        return Ok(());
    }
    let x: Vec<String> = evo.layers.iter().map(|r| r.layer_name.clone()).collect();
    let tau = vec![Series {
        name: evo.bundle_id.clone(),
        values: evo.layers.iter().map(|r| r.tau).collect(),
    }];
    sink.svg(
        None,
        "evolution_tau",
        &tau_figure("Evolution of mean layer similarity", x.clone(), tau),
    )?;
    let spec = FigureSpec::new(
        "Unique encoded concepts per layer",
        FigurePayload::GroupedBars {
            x_labels: x,
            series: vec![
                Series {
                    name: "mammography".into(),
                    values: evo.layers.iter().map(|r| r.encoded_mammo as f64).collect(),
                },
                Series {
                    name: "non-mammography".into(),
                    values: evo.layers.iter().map(|r| r.encoded_nonmammo as f64).collect(),
                },
            ],
            y_label: "concepts".into(),
        },
    );
    sink.svg(None, "evolution_counts", &spec)
}

fn category_figure(sink: &mut Sink, breakdowns: &[CategoryBreakdown]) -> Result<(), CliError> {
    if breakdowns.is_empty() {
        return Ok(());
    }
    let series = BroadCategory::ALL
        .iter()
        .map(|c| Series {
            name: c.name().to_string(),
            values: breakdowns.iter().map(|b| b.counts[c] as f64).collect(),
        })
        .collect();
    let spec = FigureSpec::new(
        "Encoded concepts by broad category",
        FigurePayload::StackedBars {
            x_labels: breakdowns.iter().map(|b| b.layer_name.clone()).collect(),
            series,
            y_label: "concepts".into(),
        },
    );
    sink.svg(None, "categories", &spec)
}

fn task_figure(sink: &mut Sink, rows: &[TaskCountRow]) -> Result<(), CliError> {
    if rows.is_empty() {
        return Ok(());
    }
    let pick = |f: fn(&TaskCountRow) -> usize| rows.iter().map(|r| f(r) as f64).collect::<Vec<f64>>();
    let spec = FigureSpec::new(
        "Task-related concepts encoded per layer",
        FigurePayload::GroupedBars {
            x_labels: rows.iter().map(|r| r.layer_name.clone()).collect(),
            series: vec![
                Series {
                    name: "mass".into(),
                    values: pick(|r| r.mass),
                },
                Series {
                    name: "calcification".into(),
                    values: pick(|r| r.calcification),
                },
                Series {
                    name: "density".into(),
                    values: pick(|r| r.density),
                },
            ],
            y_label: "concepts".into(),
        },
    );
    sink.svg(None, "tasks", &spec)
}

pub fn report(res: &Resolved) -> Result<(), CliError> {
    let (bundle, analyses) = analyze(res)?;
    let concepts = bundle.concepts();
    let bundle_id = bundle.manifest().bundle_id.clone();
    let mut sink = Sink::new(res, &bundle_id);

    write_labels(&mut sink, &analyses, concepts)?;
    write_thresholds(&mut sink, &analyses)?;

    let evo = layer_evolution(&bundle_id, &analyses, concepts);
    sink.csv(None, "evolution", &evo)?;
    sink.json(None, "evolution", &evo)?;
    evolution_figures(&mut sink, &evo)?;

    let breakdowns: Vec<CategoryBreakdown> = analyses
        .iter()
        .map(|a| category_breakdown(&a.encoded, concepts, res.basis))
        .collect();
    sink.csv(None, "categories", breakdowns.as_slice())?;
    sink.json(None, "categories", &breakdowns)?;
    category_figure(&mut sink, &breakdowns)?;

    let tasks = task_count_rows(&analyses, concepts, res.basis);
    sink.csv(None, "tasks", tasks.as_slice())?;
    sink.json(None, "tasks", &tasks)?;
    task_figure(&mut sink, &tasks)?;

    let cov = coverage_report(&analyses, concepts, res.basis);
    write_coverage(&mut sink, &cov, concepts)?;

    for a in &analyses {
        let words = label_cloud(a, concepts, CLOUD_WORDS);
        if words.is_empty() {
            continue;
        }
        let spec = FigureSpec::new(
            format!("Concepts of layer {}", a.record.layer_name),
            FigurePayload::Wordcloud { words, seed: res.seed },
        );
        sink.svg(Some(&a.record.layer_name), "wordcloud", &spec)?;
    }
    sink.done("report");
    Ok(())
}
