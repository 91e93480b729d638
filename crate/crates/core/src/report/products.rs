use super::{fmt_float, CsvProduct};
use crate::analytics::{CategoryBreakdown, CoverageReport, LayerEvolution, ModelComparison, TaskCountRow};
use crate::conceptset::ConceptSet;
use crate::labeling::{NeuronCard, NeuronLabel};
use crate::pipeline::LayerAnalysis;

impl CsvProduct for [NeuronLabel] {
    fn header(&self) -> Vec<&'static str> {
        vec!["layer", "neuron", "concept_index", "concept", "similarity"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|l| {
                vec![
                    l.layer_name.clone(),
                    l.neuron.to_string(),
                    l.concept.to_string(),
                    l.concept_text.clone(),
                    fmt_float(l.similarity),
                ]
            })
            .collect()
    }
}

impl CsvProduct for LayerEvolution {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "layer",
            "stage",
            "tau",
            "encoded_mammo",
            "encoded_nonmammo",
            "labelled_mammo",
            "labelled_nonmammo",
            "activated_neurons",
            "neuron_count",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.layers
            .iter()
            .map(|r| {
                vec![
                    r.layer_name.clone(),
                    r.stage.to_string(),
                    fmt_float(r.tau),
                    r.encoded_mammo.to_string(),
                    r.encoded_nonmammo.to_string(),
                    r.labelled_mammo.to_string(),
                    r.labelled_nonmammo.to_string(),
                    r.activated_neurons.to_string(),
                    r.neuron_count.to_string(),
                ]
            })
            .collect()
    }
}

impl CsvProduct for [CategoryBreakdown] {
    fn header(&self) -> Vec<&'static str> {
        vec!["layer", "broad_category", "count", "top3_rank"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for b in self {
            for (cat, n) in &b.counts {
                let rank = b
                    .top3
                    .iter()
                    .position(|(c, _)| c == cat)
                    .map(|r| (r + 1).to_string())
                    .unwrap_or_default();
                rows.push(vec![b.layer_name.clone(), cat.name().to_string(), n.to_string(), rank]);
            }
        }
        rows
    }
}

impl CsvProduct for [TaskCountRow] {
    fn header(&self) -> Vec<&'static str> {
        vec!["layer", "mass", "calcification", "density"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|r| {
                vec![
                    r.layer_name.clone(),
                    r.mass.to_string(),
                    r.calcification.to_string(),
                    r.density.to_string(),
                ]
            })
            .collect()
    }
}

impl CsvProduct for [LayerAnalysis] {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "layer",
            "stage",
            "tau",
            "source",
            "neuron_count",
            "activated_neurons",
            "encoded_concepts",
            "labelled_concepts",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.iter()
            .map(|a| {
                vec![
                    a.record.layer_name.clone(),
                    a.record.stage_tag.to_string(),
                    fmt_float(a.threshold.tau),
                    serde_json::to_value(a.threshold.source)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    a.similarity.neuron_count().to_string(),
                    a.encoded.activated_neurons.len().to_string(),
                    a.encoded.encoded_concepts.len().to_string(),
                    a.encoded.labelled_concepts.len().to_string(),
                ]
            })
            .collect()
    }
}

/// One row per concept with its learned/missed status.
pub struct CoverageTable<'a> {
    pub report: &'a CoverageReport,
    pub concepts: &'a ConceptSet,
}

impl CsvProduct for CoverageTable<'_> {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "concept_index",
            "concept",
            "subcategory",
            "broad_category",
            "mammography",
            "status",
            "distinct_miss",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.concepts
            .entries()
            .iter()
            .enumerate()
            .map(|(j, e)| {
                let learned = self.report.learned.contains(&j);
                vec![
                    j.to_string(),
                    e.text.clone(),
                    e.subcategory.clone(),
                    e.broad_category.name().to_string(),
                    e.is_mammography().to_string(),
                    if learned { "learned" } else { "missed" }.to_string(),
                    self.report.missed_mammo_distinct.contains(&j).to_string(),
                ]
            })
            .collect()
    }
}

/// One row per concept in the union of both models' encoded sets, per layer.
pub struct ComparisonTable<'a> {
    pub comparison: &'a ModelComparison,
    pub concepts: &'a ConceptSet,
}

impl CsvProduct for ComparisonTable<'_> {
    fn header(&self) -> Vec<&'static str> {
        vec!["layer_a", "layer_b", "tau", "concept_index", "concept", "membership"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for l in &self.comparison.layers {
            let groups = [
                ("unique_to_a", &l.unique_to_a),
                ("unique_to_b", &l.unique_to_b),
                ("common", &l.common),
            ];
            for (tag, set) in groups {
                for &j in set {
                    rows.push(vec![
                        l.layer_a.clone(),
                        l.layer_b.clone(),
                        fmt_float(l.threshold.tau),
                        j.to_string(),
                        self.concepts.text(j).to_string(),
                        tag.to_string(),
                    ]);
                }
            }
        }
        rows
    }
}

impl CsvProduct for NeuronCard {
    fn header(&self) -> Vec<&'static str> {
        vec!["kind", "rank", "index", "text_or_path", "value"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let concepts = self.top_concepts.iter().enumerate().map(|(r, c)| {
            vec![
                "concept".into(),
                (r + 1).to_string(),
                c.concept.to_string(),
                c.text.clone(),
                fmt_float(c.similarity),
            ]
        });
        let images = self.top_images.iter().enumerate().map(|(r, i)| {
            vec![
                "image".into(),
                (r + 1).to_string(),
                i.image.to_string(),
                i.path.clone().unwrap_or_default(),
                fmt_float(i.activation),
            ]
        });
        concepts.chain(images).collect()
    }
}
