//! SVG 1.1 figures: line and bar charts, word clouds and neuron cards.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::wordcloud::{layout_wordcloud, CloudWord, CANVAS_HEIGHT, CANVAS_WIDTH};
use super::ReportError;
use crate::conceptset::BroadCategory;
use crate::labeling::NeuronCard;

pub type Palette = BTreeMap<BroadCategory, String>;

pub fn default_palette() -> Palette {
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    BroadCategory::ALL
        .iter()
        .zip(colours)
        .map(|(&c, h)| (c, h.to_string()))
        .collect()
}

const SERIES_COLOURS: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];
const FALLBACK: &str = "#555555";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    Line,
    GroupedBars,
    StackedBars,
    Wordcloud,
    NeuronCard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FigurePayload {
    Line {
        x_labels: Vec<String>,
        series: Vec<Series>,
        y_label: String,
    },
    GroupedBars {
        x_labels: Vec<String>,
        series: Vec<Series>,
        y_label: String,
    },
    /// Series named after a broad category take its palette colour.
    StackedBars {
        x_labels: Vec<String>,
        series: Vec<Series>,
        y_label: String,
    },
    Wordcloud {
        words: Vec<CloudWord>,
        seed: u64,
    },
    NeuronCard {
        card: NeuronCard,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub title: String,
    pub payload: FigurePayload,
    pub palette: Palette,
}

impl FigureSpec {
    pub fn new(title: impl Into<String>, payload: FigurePayload) -> Self {
        FigureSpec {
            title: title.into(),
            payload,
            palette: default_palette(),
        }
    }

    pub fn kind(&self) -> FigureKind {
        match self.payload {
            FigurePayload::Line { .. } => FigureKind::Line,
            FigurePayload::GroupedBars { .. } => FigureKind::GroupedBars,
            FigurePayload::StackedBars { .. } => FigureKind::StackedBars,
            FigurePayload::Wordcloud { .. } => FigureKind::Wordcloud,
            FigurePayload::NeuronCard { .. } => FigureKind::NeuronCard,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Doc {
    buf: String,
}

impl Doc {
    fn new(width: f64, height: f64, title: &str) -> Self {
        let mut buf = String::new();
        buf.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            buf,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"Helvetica, Arial, sans-serif\">"
        );
        let _ = writeln!(buf, "<title>{}</title>", escape(title));
        let _ = writeln!(
            buf,
            "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>"
        );
        let mut doc = Doc { buf };
        doc.text(width / 2.0, 28.0, 18.0, "middle", "#222222", title);
        doc
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, fill: &str, body: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.2}\" text-anchor=\"{anchor}\" fill=\"{fill}\">{}</text>",
            escape(body)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.buf,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"1\"/>"
        );
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

const CHART_W: f64 = 860.0;
const CHART_H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

fn check_series(x_labels: &[String], series: &[Series]) -> Result<(), ReportError> {
    if x_labels.is_empty() || series.is_empty() {
        return Err(ReportError::Degenerate(
            "chart needs at least one category and one series".into(),
        ));
    }
    for s in series {
        if s.values.len() != x_labels.len() {
            return Err(ReportError::Degenerate(format!(
                "series '{}' has {} values for {} categories",
                s.name,
                s.values.len(),
                x_labels.len()
            )));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(ReportError::Degenerate(format!(
                "series '{}' has non-finite values",
                s.name
            )));
        }
    }
    Ok(())
}

struct Axes {
    lo: f64,
    hi: f64,
    nx: usize,
}

impl Axes {
    fn new(lo: f64, hi: f64, nx: usize) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Axes { lo, hi, nx }
    }

    fn plot_w(&self) -> f64 {
        CHART_W - LEFT - RIGHT
    }

    fn y(&self, v: f64) -> f64 {
        let plot_h = CHART_H - TOP - BOTTOM;
        TOP + plot_h * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    fn slot(&self) -> f64 {
        self.plot_w() / self.nx as f64
    }

    fn x_center(&self, i: usize) -> f64 {
        LEFT + self.slot() * (i as f64 + 0.5)
    }

    fn draw(&self, doc: &mut Doc, x_labels: &[String], y_label: &str) {
        let bottom = CHART_H - BOTTOM;
        doc.line(LEFT, TOP, LEFT, bottom, "#333333");
        doc.line(
            LEFT,
            self.y(self.lo.max(0.0).min(self.hi)),
            LEFT + self.plot_w(),
            self.y(self.lo.max(0.0).min(self.hi)),
            "#333333",
        );
        for t in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * t as f64 / 4.0;
            let y = self.y(v);
            doc.line(LEFT - 4.0, y, LEFT, y, "#333333");
            doc.text(LEFT - 8.0, y + 4.0, 11.0, "end", "#333333", &format_tick(v));
        }
        for (i, l) in x_labels.iter().enumerate() {
            doc.text(self.x_center(i), bottom + 20.0, 12.0, "middle", "#333333", l);
        }
        let _ = writeln!(
            doc.buf,
            "<text x=\"20.00\" y=\"{:.2}\" font-size=\"12.00\" text-anchor=\"middle\" fill=\"#333333\" transform=\"rotate(-90 20.00 {:.2})\">{}</text>",
            (TOP + bottom) / 2.0,
            (TOP + bottom) / 2.0,
            escape(y_label)
        );
    }
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn legend(doc: &mut Doc, entries: &[(String, String)]) {
    let x = CHART_W - RIGHT + 20.0;
    for (i, (name, colour)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        doc.rect(x, y - 10.0, 12.0, 12.0, colour);
        doc.text(x + 18.0, y, 11.0, "start", "#333333", name);
    }
}

fn series_colour(palette: &Palette, name: &str, i: usize, by_category: bool) -> String {
    if by_category {
        if let Ok(c) = name.parse::<BroadCategory>() {
            return palette.get(&c).cloned().unwrap_or_else(|| FALLBACK.into());
        }
    }
    SERIES_COLOURS[i % SERIES_COLOURS.len()].to_string()
}

fn value_range(series: &[Series]) -> (f64, f64) {
    let all = series.iter().flat_map(|s| s.values.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (lo, hi)
}

fn render_line(
    spec: &FigureSpec,
    x_labels: &[String],
    series: &[Series],
    y_label: &str,
) -> Result<String, ReportError> {
    check_series(x_labels, series)?;
    let (lo, hi) = value_range(series);
    let pad = ((hi - lo) * 0.1).max(1e-12);
    let axes = Axes::new(lo - pad, hi + pad, x_labels.len());
    let mut doc = Doc::new(CHART_W, CHART_H, &spec.title);
    axes.draw(&mut doc, x_labels, y_label);
    let mut entries = Vec::new();
    for (si, s) in series.iter().enumerate() {
        let colour = series_colour(&spec.palette, &s.name, si, false);
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", axes.x_center(i), axes.y(*v)))
            .collect();
        let _ = writeln!(
            doc.buf,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>",
            points.join(" ")
        );
        for (i, v) in s.values.iter().enumerate() {
            let _ = writeln!(
                doc.buf,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{colour}\"/>",
                axes.x_center(i),
                axes.y(*v)
            );
        }
        entries.push((s.name.clone(), colour));
    }
    legend(&mut doc, &entries);
    Ok(doc.finish())
}

fn render_grouped(
    spec: &FigureSpec,
    x_labels: &[String],
    series: &[Series],
    y_label: &str,
) -> Result<String, ReportError> {
    check_series(x_labels, series)?;
    let (lo, hi) = value_range(series);
    let axes = Axes::new(lo.min(0.0), hi.max(0.0) * 1.05, x_labels.len());
    let mut doc = Doc::new(CHART_W, CHART_H, &spec.title);
    axes.draw(&mut doc, x_labels, y_label);
    let bar_w = axes.slot() * 0.8 / series.len() as f64;
    let base = axes.y(0.0);
    let mut entries = Vec::new();
    for (si, s) in series.iter().enumerate() {
        let colour = series_colour(&spec.palette, &s.name, si, true);
        for (i, v) in s.values.iter().enumerate() {
            let x = axes.x_center(i) - axes.slot() * 0.4 + bar_w * si as f64;
            let y = axes.y(*v);
            doc.rect(x, y.min(base), bar_w, (base - y).abs(), &colour);
        }
        entries.push((s.name.clone(), colour));
    }
    legend(&mut doc, &entries);
    Ok(doc.finish())
}

fn render_stacked(
    spec: &FigureSpec,
    x_labels: &[String],
    series: &[Series],
    y_label: &str,
) -> Result<String, ReportError> {
    check_series(x_labels, series)?;
    if series.iter().any(|s| s.values.iter().any(|v| *v < 0.0)) {
        return Err(ReportError::Degenerate("stacked bars need non-negative values".into()));
    }
    let totals: Vec<f64> = (0..x_labels.len())
        .map(|i| series.iter().map(|s| s.values[i]).sum())
        .collect();
    let hi = totals.iter().copied().fold(0.0, f64::max);
    let axes = Axes::new(0.0, hi * 1.05, x_labels.len());
    let mut doc = Doc::new(CHART_W, CHART_H, &spec.title);
    axes.draw(&mut doc, x_labels, y_label);
    let bar_w = axes.slot() * 0.6;
    let mut stack = vec![0.0; x_labels.len()];
    let mut entries = Vec::new();
    for (si, s) in series.iter().enumerate() {
        let colour = series_colour(&spec.palette, &s.name, si, true);
        for (i, v) in s.values.iter().enumerate() {
            let (y0, y1) = (axes.y(stack[i]), axes.y(stack[i] + v));
            doc.rect(axes.x_center(i) - bar_w / 2.0, y1, bar_w, y0 - y1, &colour);
            stack[i] += v;
        }
        entries.push((s.name.clone(), colour));
    }
    legend(&mut doc, &entries);
    Ok(doc.finish())
}

fn render_cloud(spec: &FigureSpec, words: &[CloudWord], seed: u64) -> Result<String, ReportError> {
    let placed = layout_wordcloud(words, seed)?;
    let mut doc = Doc::new(CANVAS_WIDTH, CANVAS_HEIGHT + 40.0, &spec.title);
    for w in &placed {
        let colour = w
            .category
            .and_then(|c| spec.palette.get(&c).cloned())
            .unwrap_or_else(|| FALLBACK.into());
        // Baseline sits about 0.35 em below the box centre.
        doc.text(
            w.x,
            w.y + 40.0 + 0.35 * w.font_size,
            w.font_size,
            "middle",
            &colour,
            &w.text,
        );
    }
    Ok(doc.finish())
}

fn render_card(spec: &FigureSpec, card: &NeuronCard) -> Result<String, ReportError> {
    if card.top_concepts.is_empty() {
        return Err(ReportError::Degenerate("neuron card has no concepts".into()));
    }
    let row_h = 26.0;
    let images_top = 90.0 + row_h * card.top_concepts.len() as f64 + 30.0;
    let height = images_top + 22.0 * card.top_images.len() as f64 + 30.0;
    let mut doc = Doc::new(CHART_W, height, &spec.title);
    let l = &card.label;
    doc.text(
        30.0,
        60.0,
        13.0,
        "start",
        "#333333",
        &format!(
            "layer {} / neuron {}: {} ({:.4})",
            l.layer_name, l.neuron, l.concept_text, l.similarity
        ),
    );
    let sims: Vec<f64> = card.top_concepts.iter().map(|c| c.similarity).collect();
    let (lo, hi) = sims
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (r, c) in card.top_concepts.iter().enumerate() {
        let y = 90.0 + row_h * r as f64;
        let len = 40.0 + 300.0 * (c.similarity - lo) / span;
        doc.rect(300.0, y - 14.0, len, 18.0, SERIES_COLOURS[0]);
        doc.text(290.0, y, 12.0, "end", "#222222", &c.text);
        doc.text(
            300.0 + len + 6.0,
            y,
            11.0,
            "start",
            "#333333",
            &format!("{:.4}", c.similarity),
        );
    }
    doc.text(
        30.0,
        images_top - 8.0,
        13.0,
        "start",
        "#333333",
        "Top activating images",
    );
    for (r, im) in card.top_images.iter().enumerate() {
        let y = images_top + 16.0 + 22.0 * r as f64;
        let path = im.path.as_deref().unwrap_or("");
        doc.text(
            30.0,
            y,
            11.0,
            "start",
            "#333333",
            &format!("#{} image {} activation {:.4} {}", r + 1, im.image, im.activation, path),
        );
    }
    Ok(doc.finish())
}

/// Renders a figure to an SVG document; a pure function of `spec`.
pub fn render_svg(spec: &FigureSpec) -> Result<String, ReportError> {
    match &spec.payload {
        FigurePayload::Line {
            x_labels,
            series,
            y_label,
        } => render_line(spec, x_labels, series, y_label),
        FigurePayload::GroupedBars {
            x_labels,
            series,
            y_label,
        } => render_grouped(spec, x_labels, series, y_label),
        FigurePayload::StackedBars {
            x_labels,
            series,
            y_label,
        } => render_stacked(spec, x_labels, series, y_label),
        FigurePayload::Wordcloud { words, seed } => render_cloud(spec, words, *seed),
        FigurePayload::NeuronCard { card } => render_card(spec, card),
    }
}
