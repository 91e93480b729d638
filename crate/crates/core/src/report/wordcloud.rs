//! Deterministic word-cloud layout on an Archimedean spiral.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use super::ReportError;
use crate::conceptset::{BroadCategory, ConceptSet};
use crate::labeling::label_neurons;
use crate::pipeline::LayerAnalysis;

pub const CANVAS_WIDTH: f64 = 960.0;
pub const CANVAS_HEIGHT: f64 = 600.0;

const MAX_FONT: f64 = 64.0;
const MIN_FONT: f64 = 12.0;
const CHAR_WIDTH: f64 = 0.6;
const MARGIN: f64 = 4.0;
const SPIRAL_STEP: f64 = 0.1;
const SPIRAL_SPACING: f64 = 1.5;
const SHRINK: f64 = 0.8;
const MAX_SHRINKS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudWord {
    pub text: String,
    pub similarity: f64,
    pub category: Option<BroadCategory>,
}

/// Distinct labels of a layer's activated neurons (all neurons if none are
/// activated), each with its best similarity, strongest first.
pub fn label_cloud(a: &LayerAnalysis, concepts: &ConceptSet, limit: usize) -> Vec<CloudWord> {
    let labels = label_neurons(&a.similarity, concepts);
    let any_active = labels.iter().any(|l| a.encoded.activated_neurons.contains(&l.neuron));
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for l in labels
        .iter()
        .filter(|l| !any_active || a.encoded.activated_neurons.contains(&l.neuron))
    {
        let slot = best.entry(l.concept).or_insert(f64::NEG_INFINITY);
        *slot = slot.max(l.similarity);
    }
    let mut ranked: Vec<(usize, f64)> = best.into_iter().collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    ranked.truncate(limit);
    ranked
        .into_iter()
        .map(|(j, similarity)| CloudWord {
            text: concepts.text(j).to_string(),
            similarity,
            category: Some(concepts.entries()[j].broad_category),
        })
        .collect()
}

/// A placed word; `(x, y)` is the centre of its bounding box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedWord {
    pub text: String,
    pub similarity: f64,
    pub category: Option<BroadCategory>,
    pub x: f64,
    pub y: f64,
    pub font_size: f64,
    pub width: f64,
    pub height: f64,
}

impl PlacedWord {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        (self.x - hw, self.y - hh, self.x + hw, self.y + hh)
    }

    /// True if the two bounding boxes share interior area.
    pub fn overlaps(&self, other: &PlacedWord) -> bool {
        let (ax0, ay0, ax1, ay1) = self.bounds();
        let (bx0, by0, bx1, by1) = other.bounds();
        ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
    }
}

/// Font size from the dense similarity rank, affine from `MAX_FONT` down to `MIN_FONT`.
fn font_sizes(sorted: &[&CloudWord]) -> Vec<f64> {
    let mut ranks = Vec::with_capacity(sorted.len());
    let mut rank = 0usize;
    for (i, w) in sorted.iter().enumerate() {
        if i > 0 && w.similarity < sorted[i - 1].similarity {
            rank += 1;
        }
        ranks.push(rank);
    }
    let top = rank.max(1) as f64;
    ranks
        .into_iter()
        .map(|r| MAX_FONT - (MAX_FONT - MIN_FONT) * r as f64 / top)
        .collect()
}

fn try_layout(sorted: &[&CloudWord], sizes: &[f64], scale: f64, phase: f64) -> Option<Vec<PlacedWord>> {
    let (cx, cy) = (CANVAS_WIDTH / 2.0, CANVAS_HEIGHT / 2.0);
    let aspect = CANVAS_HEIGHT / CANVAS_WIDTH;
    let max_theta = CANVAS_WIDTH / SPIRAL_SPACING;
    let mut placed: Vec<PlacedWord> = Vec::with_capacity(sorted.len());
    for (w, size) in sorted.iter().zip(sizes) {
        let font_size = size * scale;
        let mut word = PlacedWord {
            text: w.text.clone(),
            similarity: w.similarity,
            category: w.category,
            x: cx,
            y: cy,
            font_size,
            width: CHAR_WIDTH * font_size * w.text.chars().count() as f64,
            height: font_size,
        };
        let mut theta = 0.0;
        let mut found = false;
        while theta <= max_theta {
            let r = SPIRAL_SPACING * theta;
            word.x = cx + r * (theta + phase).cos();
            word.y = cy + r * aspect * (theta + phase).sin();
            let (x0, y0, x1, y1) = word.bounds();
            let inside = x0 >= MARGIN && y0 >= MARGIN && x1 <= CANVAS_WIDTH - MARGIN && y1 <= CANVAS_HEIGHT - MARGIN;
            if inside && !placed.iter().any(|p| p.overlaps(&word)) {
                found = true;
                break;
            }
            theta += SPIRAL_STEP;
        }
        if !found {
            return None;
        }
        placed.push(word);
    }
    Some(placed)
}

/// Places words by similarity descending (ties by text), shrinking all fonts
/// and retrying when a word cannot be placed.
pub fn layout_wordcloud(words: &[CloudWord], seed: u64) -> Result<Vec<PlacedWord>, ReportError> {
    if words.is_empty() {
        return Err(ReportError::Degenerate("word cloud has no words".into()));
    }
    if let Some(w) = words
        .iter()
        .find(|w| !w.similarity.is_finite() || w.text.trim().is_empty())
    {
        return Err(ReportError::Degenerate(format!("invalid word '{}'", w.text)));
    }
    let mut sorted: Vec<&CloudWord> = words.iter().collect();
    sorted.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.text.cmp(&b.text)));
    let sizes = font_sizes(&sorted);
    let phase = ChaCha8Rng::seed_from_u64(seed).random::<f64>() * std::f64::consts::TAU;
    let mut scale = 1.0;
    for _ in 0..=MAX_SHRINKS {
        if let Some(placed) = try_layout(&sorted, &sizes, scale, phase) {
            return Ok(placed);
        }
        scale *= SHRINK;
    }
    Err(ReportError::LayoutOverflow(format!(
        "{} words do not fit a {CANVAS_WIDTH}x{CANVAS_HEIGHT} canvas",
        words.len()
    )))
}
