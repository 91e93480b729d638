//! Deterministic CSV, JSON and SVG serialisation of analytics products.
//!
//! Products are laid out as `<out>/<bundle_id>/<layer>/<product>.<ext>`;
//! bundle-wide products omit the layer component. Floats in CSV carry 17
//! significant digits; JSON is emitted with sorted keys and shortest
//! round-trip floats. No timestamps or environment data enter any output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::io_util::write_atomic_bytes;

mod products;
mod svg;
mod wordcloud;

pub use products::{ComparisonTable, CoverageTable};
pub use svg::{default_palette, render_svg, FigureKind, FigurePayload, FigureSpec, Palette, Series};
pub use wordcloud::{label_cloud, layout_wordcloud, CloudWord, PlacedWord, CANVAS_HEIGHT, CANVAS_WIDTH};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("word cloud layout overflow: {0}")]
    LayoutOverflow(String),
    #[error("degenerate figure payload: {0}")]
    Degenerate(String),
    #[error("serialisation failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// A product with a fixed tabular form.
pub trait CsvProduct {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

/// Float formatting used in every CSV cell: 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv_string<P: CsvProduct + ?Sized>(product: &P) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(product.header()).expect("in-memory write");
    for row in product.rows() {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    write_atomic_bytes(path, bytes).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_csv<P: CsvProduct + ?Sized>(product: &P, path: impl AsRef<Path>) -> Result<(), ReportError> {
    write(path.as_ref(), to_csv_string(product).as_bytes())
}

/// Pretty-printed JSON with lexicographically sorted object keys and a trailing newline.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    let value = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<(), ReportError> {
    write(path.as_ref(), canonical_json(value)?.as_bytes())
}

pub fn emit_svg(spec: &FigureSpec, path: impl AsRef<Path>) -> Result<(), ReportError> {
    write(path.as_ref(), render_svg(spec)?.as_bytes())
}

/// `<out>/<bundle_id>[/<layer>]/<product>.<ext>`
pub fn product_path(out: &Path, bundle_id: &str, layer: Option<&str>, product: &str, ext: &str) -> PathBuf {
    let mut p = out.join(bundle_id);
    if let Some(layer) = layer {
        p.push(layer);
    }
    p.push(format!("{product}.{ext}"));
    p
}
