use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::npy::{read_matrix, read_matrix_header};
use super::{ExchangeError, Matrix};
use crate::conceptset::ConceptSet;

pub const FORMAT_VERSION: u32 = 1;

/// Coarse network stage a layer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageTag {
    Early,
    Middle,
    Late,
    Other,
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageTag::Early => "early",
            StageTag::Middle => "middle",
            StageTag::Late => "late",
            StageTag::Other => "other",
        })
    }
}

impl std::str::FromStr for StageTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "early" => Ok(StageTag::Early),
            "middle" => Ok(StageTag::Middle),
            "late" => Ok(StageTag::Late),
            "other" => Ok(StageTag::Other),
            _ => Err(format!("unknown stage tag '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub layer_name: String,
    pub neuron_count: usize,
    pub activations_file: String,
    pub stage_tag: StageTag,
}

/// JSON manifest describing one dissected model run. Paths are relative to
/// the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub bundle_id: String,
    pub model_id: String,
    pub probe_id: String,
    pub image_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_paths: Option<Vec<String>>,
    pub image_embeddings_file: String,
    pub text_embeddings_file: String,
    pub concept_set_file: String,
    pub embedding_dim: usize,
    pub layers: Vec<LayerRecord>,
}

impl BundleManifest {
    /// Checks the manifest's internal invariants (not the referenced files).
    pub fn check(&self) -> Result<(), ExchangeError> {
        let bad = |m: String| Err(ExchangeError::InvalidManifest(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("format_version {} is not supported", self.format_version));
        }
        if self.image_count == 0 {
            return bad("image_count must be at least 1".into());
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1".into());
        }
        if let Some(paths) = &self.image_paths {
            if paths.len() != self.image_count {
                return bad(format!(
                    "image_paths lists {} entries for {} images",
                    paths.len(),
                    self.image_count
                ));
            }
        }
        let mut names = HashSet::new();
        for layer in &self.layers {
            if layer.neuron_count == 0 {
                return bad(format!("layer '{}' has no neurons", layer.layer_name));
            }
            if !names.insert(layer.layer_name.as_str()) {
                return bad(format!("duplicate layer name '{}'", layer.layer_name));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

/// A matrix whose shape has been validated but whose payload is read on first use.
#[derive(Debug)]
pub struct LazyMatrix {
    path: Option<PathBuf>,
    rows: usize,
    cols: usize,
    cell: OnceLock<Matrix>,
}

impl LazyMatrix {
    fn on_disk(path: PathBuf, rows: usize, cols: usize) -> Self {
        LazyMatrix {
            path: Some(path),
            rows,
            cols,
            cell: OnceLock::new(),
        }
    }

    pub fn in_memory(matrix: Matrix) -> Self {
        let (rows, cols) = matrix.shape();
        let cell = OnceLock::new();
        let _ = cell.set(matrix);
        LazyMatrix {
            path: None,
            rows,
            cols,
            cell,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self) -> Result<&Matrix, ExchangeError> {
        if let Some(m) = self.cell.get() {
            return Ok(m);
        }
        let path = self.path.as_ref().expect("in-memory matrices are always initialised");
        let m = read_matrix(path)?;
        if m.shape() != (self.rows, self.cols) {
            return Err(ExchangeError::ShapeMismatch {
                what: path.display().to_string(),
                expected: format!("{}x{}", self.rows, self.cols),
                found: format!("{}x{}", m.rows(), m.cols()),
            });
        }
        // A concurrent loader may have won; both read identical bytes.
        let _ = self.cell.set(m);
        Ok(self.cell.get().expect("just set"))
    }
}

/// A bundle whose manifest and every referenced file header have been
/// cross-checked. Matrix payloads load lazily.
#[derive(Debug)]
pub struct ValidatedBundle {
    manifest: BundleManifest,
    root: PathBuf,
    concepts: ConceptSet,
    image_embeddings: LazyMatrix,
    text_embeddings: LazyMatrix,
    layers: Vec<LazyMatrix>,
}

fn expect_shape(what: &Path, found: (usize, usize), expected: (usize, usize)) -> Result<(), ExchangeError> {
    if found != expected {
        return Err(ExchangeError::ShapeMismatch {
            what: what.display().to_string(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        });
    }
    Ok(())
}

/// Reads a manifest and validates every file it references.
pub fn load_bundle(manifest_path: impl AsRef<Path>) -> Result<ValidatedBundle, ExchangeError> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path).map_err(|e| ExchangeError::io(manifest_path, e))?;
    let manifest: BundleManifest = serde_json::from_str(&text)
        .map_err(|e| ExchangeError::InvalidManifest(format!("{}: {e}", manifest_path.display())))?;
    manifest.check()?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();

    let resolve = |rel: &str| -> Result<PathBuf, ExchangeError> {
        let p = root.join(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(ExchangeError::MissingFile(p))
        }
    };

    let n = manifest.image_count;
    let d = manifest.embedding_dim;

    let concept_path = resolve(&manifest.concept_set_file)?;
    let concepts = ConceptSet::load(&concept_path)?;

    let img_path = resolve(&manifest.image_embeddings_file)?;
    let img = read_matrix_header(&img_path)?;
    expect_shape(&img_path, (img.rows, img.cols), (n, d))?;

    let txt_path = resolve(&manifest.text_embeddings_file)?;
    let txt = read_matrix_header(&txt_path)?;
    if txt.cols != d {
        expect_shape(&txt_path, (txt.rows, txt.cols), (txt.rows, d))?;
    }
    if txt.rows != concepts.len() {
        return Err(ExchangeError::ConceptCountMismatch {
            text_rows: txt.rows,
            concepts: concepts.len(),
        });
    }

    let mut layers = Vec::with_capacity(manifest.layers.len());
    for layer in &manifest.layers {
        let path = resolve(&layer.activations_file)?;
        let h = read_matrix_header(&path)?;
        expect_shape(&path, (h.rows, h.cols), (n, layer.neuron_count))?;
        layers.push(LazyMatrix::on_disk(path, h.rows, h.cols));
    }

    Ok(ValidatedBundle {
        image_embeddings: LazyMatrix::on_disk(img_path, n, d),
        text_embeddings: LazyMatrix::on_disk(txt_path, txt.rows, d),
        manifest,
        root,
        concepts,
        layers,
    })
}

impl ValidatedBundle {
    /// Assembles a bundle from in-memory parts, applying the same checks as [`load_bundle`].
    pub fn from_memory(
        manifest: BundleManifest,
        concepts: ConceptSet,
        image_embeddings: Matrix,
        text_embeddings: Matrix,
        layers: Vec<Matrix>,
    ) -> Result<Self, ExchangeError> {
        manifest.check()?;
        let (n, d) = (manifest.image_count, manifest.embedding_dim);
        let here = Path::new("<memory>");
        expect_shape(here, image_embeddings.shape(), (n, d))?;
        expect_shape(
            here,
            (text_embeddings.rows(), text_embeddings.cols()),
            (text_embeddings.rows(), d),
        )?;
        if text_embeddings.rows() != concepts.len() {
            return Err(ExchangeError::ConceptCountMismatch {
                text_rows: text_embeddings.rows(),
                concepts: concepts.len(),
            });
        }
        if layers.len() != manifest.layers.len() {
            return Err(ExchangeError::InvalidManifest(format!(
                "{} layer records but {} activation tables",
                manifest.layers.len(),
                layers.len()
            )));
        }
        for (rec, m) in manifest.layers.iter().zip(&layers) {
            expect_shape(here, m.shape(), (n, rec.neuron_count))?;
        }
        Ok(ValidatedBundle {
            manifest,
            root: PathBuf::new(),
            concepts,
            image_embeddings: LazyMatrix::in_memory(image_embeddings),
            text_embeddings: LazyMatrix::in_memory(text_embeddings),
            layers: layers.into_iter().map(LazyMatrix::in_memory).collect(),
        })
    }

    /// Replaces the concept set, e.g. from a command-line override.
    pub fn with_concepts(mut self, concepts: ConceptSet) -> Result<Self, ExchangeError> {
        let rows = self.text_embeddings.shape().0;
        if rows != concepts.len() {
            return Err(ExchangeError::ConceptCountMismatch {
                text_rows: rows,
                concepts: concepts.len(),
            });
        }
        self.concepts = concepts;
        Ok(self)
    }

    pub fn manifest(&self) -> &BundleManifest {
        &self.manifest
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn concepts(&self) -> &ConceptSet {
        &self.concepts
    }

    pub fn image_count(&self) -> usize {
        self.manifest.image_count
    }

    pub fn image_paths(&self) -> Option<&[String]> {
        self.manifest.image_paths.as_deref()
    }

    pub fn layer_records(&self) -> &[LayerRecord] {
        &self.manifest.layers
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.manifest.layers.iter().position(|l| l.layer_name == name)
    }

    pub fn image_embeddings(&self) -> Result<&Matrix, ExchangeError> {
        self.image_embeddings.get()
    }

    pub fn text_embeddings(&self) -> Result<&Matrix, ExchangeError> {
        self.text_embeddings.get()
    }

    pub fn layer_activations(&self, index: usize) -> Result<&Matrix, ExchangeError> {
        self.layers[index].get()
    }
}
