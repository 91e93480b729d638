//! SoftWPMI similarity between neuron activation vectors and concepts.
//!
//! Given probe-image embeddings `I` (N×d) and concept embeddings `T` (M×d) from a
//! vision-language dissector, the concept-activation matrix is
//! `P[i][m] = <I_i / |I_i|, T_m / |T_m|>`. Each row is turned into concept
//! conditionals `p(t_m | x_i) = softmax(a · P[i, :])[m]`.
//!
//! For a neuron with activation vector `q` over the probe images, the top-Z
//! images receive soft membership weights `p_i` (rank-linear from
//! `membership_start` at rank 1 to `membership_end` at rank Z, zero beyond) and
//!
//! ```text
//! sim(t_m, q) = Σ_i log(1 + p_i · (p(t_m | x_i) − 1)) − λ · log p(t_m)
//! ```
//!
//! where `p(t_m)` is the mean conditional over all probe images. The evidence
//! factor is evaluated as `(1 − p_i) + p_i · p(t_m | x_i)`, which stays exact
//! for tiny conditionals when `p_i = 1`. Every log argument is clamped to `[min_prob, 1]`. Sums run over images in ascending
//! index order so results are bit-reproducible under any thread count.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("row {0} has zero norm and cannot be normalised")]
    ZeroNormRow(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Parameters of the similarity function. Recorded in every [`SimilarityMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Weight of the concept prior term (λ).
    pub lambda: f64,
    /// Number of top-activating images with non-zero membership (Z).
    pub top_z: usize,
    /// Softmax scale applied to concept-activation rows.
    pub temperature: f64,
    pub membership_start: f64,
    pub membership_end: f64,
    pub min_prob: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            lambda: 1.0,
            top_z: 100,
            temperature: 10.0,
            membership_start: 0.998,
            membership_end: 0.97,
            min_prob: 1e-7,
        }
    }
}

impl SimParams {
    pub fn validate(&self, n_images: usize, n_concepts: usize) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.top_z == 0 || self.top_z > n_images {
            return bad(format!("top_z must be in 1..={n_images}, got {}", self.top_z));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.membership_start) || !unit(self.membership_end) {
            return bad("membership endpoints must lie in (0, 1]".into());
        }
        if self.membership_start < self.membership_end {
            return bad("membership_start must be >= membership_end".into());
        }
        if !(self.min_prob > 0.0 && self.min_prob * (n_concepts as f64) < 1.0) {
            return bad(format!("min_prob must be in (0, 1/M), got {}", self.min_prob));
        }
        Ok(())
    }
}

/// The N×M image–concept inner products.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptActivationMatrix {
    pub values: Matrix,
    pub normalized: bool,
}

/// K×M neuron–concept similarities for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Matrix,
    pub params: SimParams,
    pub layer_name: String,
}

impl SimilarityMatrix {
    pub fn neuron_count(&self) -> usize {
        self.values.rows()
    }

    pub fn concept_count(&self) -> usize {
        self.values.cols()
    }
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows(matrix: &Matrix) -> Result<Matrix, SimError> {
    let mut data = Vec::with_capacity(matrix.rows() * matrix.cols());
    for (i, row) in matrix.row_iter().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SimError::ZeroNormRow(i));
        }
        data.extend(row.iter().map(|v| v / norm));
    }
    Ok(Matrix::from_raw(matrix.rows(), matrix.cols(), data))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds `P` from raw image (N×d) and concept (M×d) embeddings.
pub fn concept_activation_matrix(images: &Matrix, texts: &Matrix) -> Result<ConceptActivationMatrix, SimError> {
    if images.cols() != texts.cols() {
        return Err(SimError::DimMismatch(format!(
            "image embeddings have d={}, text embeddings d={}",
            images.cols(),
            texts.cols()
        )));
    }
    let images = l2_normalize_rows(images)?;
    let texts = l2_normalize_rows(texts)?;
    let (n, m) = (images.rows(), texts.rows());
    let mut data = vec![0.0; n * m];
    let fill = |(i, out): (usize, &mut [f64])| {
        let img = images.row(i);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = dot(img, texts.row(j));
        }
    };
    if m > 0 {
        for_each_row(&mut data, m, fill);
    }
    Ok(ConceptActivationMatrix {
        values: Matrix::from_raw(n, m, data),
        normalized: true,
    })
}

/// Row-wise `softmax(temperature · P[i, :])`, stabilised by max subtraction.
pub fn concept_conditionals(p: &Matrix, temperature: f64) -> Matrix {
    let (n, m) = p.shape();
    let mut data = Vec::with_capacity(n * m);
    for row in p.row_iter() {
        let max = row.iter().map(|v| temperature * v).fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        let mut sum = 0.0;
        for v in row {
            let e = (temperature * v - max).exp();
            sum += e;
            data.push(e);
        }
        for v in &mut data[start..] {
            *v /= sum;
        }
    }
    Matrix::from_raw(n, m, data)
}

/// Image indices ordered by activation descending, ties by ascending index.
pub fn rank_images(q: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| by_activation(q, a, b));
    order
}

fn by_activation(q: &[f64], a: usize, b: usize) -> Ordering {
    q[b].partial_cmp(&q[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
}

/// The `z` highest-ranked image indices, in rank order.
pub fn top_images(q: &[f64], z: usize) -> Vec<usize> {
    let z = z.min(q.len());
    if z == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..q.len()).collect();
    if z < order.len() {
        order.select_nth_unstable_by(z - 1, |&a, &b| by_activation(q, a, b));
        order.truncate(z);
    }
    order.sort_by(|&a, &b| by_activation(q, a, b));
    order
}

fn membership_weight(rank: usize, top_z: usize, start: f64, end: f64) -> f64 {
    if top_z == 1 {
        start
    } else {
        start + (end - start) * (rank as f64) / ((top_z - 1) as f64)
    }
}

/// Soft membership of each image in the neuron's top-Z set.
pub fn membership_probs(q: &[f64], top_z: usize, start: f64, end: f64) -> Vec<f64> {
    let mut probs = vec![0.0; q.len()];
    let top = top_images(q, top_z);
    let z = top.len();
    for (rank, &i) in top.iter().enumerate() {
        probs[i] = membership_weight(rank, z, start, end);
    }
    probs
}

/// Concept conditionals and log-marginals shared by every neuron of a probe set.
#[derive(Clone, Debug)]
pub struct ConceptStatistics {
    conditionals: Matrix,
    log_marginal: Vec<f64>,
}

impl ConceptStatistics {
    pub fn from_conditionals(conditionals: Matrix, min_prob: f64) -> Self {
        let (n, m) = conditionals.shape();
        let mut sums = vec![0.0; m];
        for row in conditionals.row_iter() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let log_marginal = sums.into_iter().map(|s| (s / n as f64).max(min_prob).ln()).collect();
        ConceptStatistics {
            conditionals,
            log_marginal,
        }
    }

    pub fn conditionals(&self) -> &Matrix {
        &self.conditionals
    }

    /// `log p(t_m)` after clamping.
    pub fn log_marginal(&self) -> &[f64] {
        &self.log_marginal
    }
}

/// Accumulates the evidence term for explicit (image, weight) pairs sorted by
/// image index, then subtracts the weighted prior.
fn wpmi_row(stats: &ConceptStatistics, members: &[(usize, f64)], lambda: f64, min_prob: f64, out: &mut [f64]) {
    out.fill(0.0);
    for &(i, p) in members {
        if p == 0.0 {
            continue;
        }
        for (acc, c) in out.iter_mut().zip(stats.conditionals.row(i)) {
            *acc += ((1.0 - p) + p * c).clamp(min_prob, 1.0).ln();
        }
    }
    for (acc, lm) in out.iter_mut().zip(&stats.log_marginal) {
        *acc -= lambda * lm;
    }
}

fn sorted_members(q: &[f64], params: &SimParams) -> Vec<(usize, f64)> {
    let top = top_images(q, params.top_z);
    let z = top.len();
    let mut members: Vec<(usize, f64)> = top
        .into_iter()
        .enumerate()
        .map(|(rank, i)| {
            (
                i,
                membership_weight(rank, z, params.membership_start, params.membership_end),
            )
        })
        .collect();
    members.sort_by_key(|&(i, _)| i);
    members
}

/// SoftWPMI of one neuron against every concept, given conditionals.
pub fn soft_wpmi(conditionals: &Matrix, q: &[f64], params: &SimParams) -> Vec<f64> {
    assert_eq!(conditionals.rows(), q.len(), "activation length must equal probe count");
    let stats = ConceptStatistics::from_conditionals(conditionals.clone(), params.min_prob);
    let mut out = vec![0.0; conditionals.cols()];
    wpmi_row(
        &stats,
        &sorted_members(q, params),
        params.lambda,
        params.min_prob,
        &mut out,
    );
    out
}

/// SoftWPMI with an explicit membership vector (one weight per image).
pub fn soft_wpmi_with_membership(conditionals: &Matrix, membership: &[f64], params: &SimParams) -> Vec<f64> {
    assert_eq!(
        conditionals.rows(),
        membership.len(),
        "membership length must equal probe count"
    );
    let stats = ConceptStatistics::from_conditionals(conditionals.clone(), params.min_prob);
    let members: Vec<(usize, f64)> = membership.iter().copied().enumerate().collect();
    let mut out = vec![0.0; conditionals.cols()];
    wpmi_row(&stats, &members, params.lambda, params.min_prob, &mut out);
    out
}

/// Hard-membership WPMI: the top-Z images count fully, all others not at all.
/// Computed directly from `log p(t_m | x_i)` rather than through the soft path.
pub fn hard_wpmi(conditionals: &Matrix, q: &[f64], params: &SimParams) -> Vec<f64> {
    assert_eq!(conditionals.rows(), q.len(), "activation length must equal probe count");
    let (n, m) = conditionals.shape();
    let mut top = top_images(q, params.top_z);
    top.sort_unstable();
    let mut out = vec![0.0; m];
    for &i in &top {
        for (acc, c) in out.iter_mut().zip(conditionals.row(i)) {
            *acc += c.clamp(params.min_prob, 1.0).ln();
        }
    }
    for (j, acc) in out.iter_mut().enumerate() {
        let mean = (0..n).map(|i| conditionals.get(i, j)).sum::<f64>() / n as f64;
        *acc -= params.lambda * mean.max(params.min_prob).ln();
    }
    out
}

/// Reusable kernel for one probe set and parameter record.
#[derive(Clone, Debug)]
pub struct SimilarityKernel {
    stats: ConceptStatistics,
    params: SimParams,
}

impl SimilarityKernel {
    pub fn new(p: &ConceptActivationMatrix, params: SimParams) -> Result<Self, SimError> {
        let (n, m) = p.values.shape();
        params.validate(n, m)?;
        let conditionals = concept_conditionals(&p.values, params.temperature);
        Ok(SimilarityKernel {
            stats: ConceptStatistics::from_conditionals(conditionals, params.min_prob),
            params,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn statistics(&self) -> &ConceptStatistics {
        &self.stats
    }

    /// Similarities of every neuron (column of `activations`) to every concept.
    pub fn layer(&self, activations: &Matrix, layer_name: &str) -> Result<SimilarityMatrix, SimError> {
        let (n, m) = self.stats.conditionals.shape();
        if activations.rows() != n {
            return Err(SimError::DimMismatch(format!(
                "layer '{layer_name}' has {} activation rows for {n} probe images",
                activations.rows()
            )));
        }
        let k = activations.cols();
        let by_neuron = activations.transpose();
        let mut data = vec![0.0; k * m];
        if m > 0 {
            for_each_row(&mut data, m, |(neuron, out)| {
                let members = sorted_members(by_neuron.row(neuron), &self.params);
                wpmi_row(&self.stats, &members, self.params.lambda, self.params.min_prob, out);
            });
        }
        Ok(SimilarityMatrix {
            values: Matrix::from_raw(k, m, data),
            params: self.params,
            layer_name: layer_name.to_string(),
        })
    }
}

/// Computes the similarity matrix S (K×M) for one layer.
pub fn similarity_matrix(
    p: &ConceptActivationMatrix,
    activations: &Matrix,
    params: &SimParams,
    layer_name: &str,
) -> Result<SimilarityMatrix, SimError> {
    SimilarityKernel::new(p, *params)?.layer(activations, layer_name)
}

#[cfg(feature = "parallel")]
fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn((usize, &mut [f64])) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(width).enumerate().for_each(f);
}

#[cfg(not(feature = "parallel"))]
fn for_each_row<F>(data: &mut [f64], width: usize, f: F)
where
    F: Fn((usize, &mut [f64])),
{
    data.chunks_mut(width).enumerate().for_each(f);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn normalise_examples() {
        let out = l2_normalize_rows(&m(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(out.row(0), &[0.6, 0.8]);
        let eye = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(l2_normalize_rows(&eye).unwrap(), eye);
        assert_eq!(
            l2_normalize_rows(&m(&[&[1.0, 1.0], &[0.0, 0.0]])),
            Err(SimError::ZeroNormRow(1))
        );
    }

    #[test]
    fn activation_matrix_examples() {
        let p = concept_activation_matrix(&m(&[&[1.0, 0.0]]), &m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(p.values.row(0), &[1.0, 0.0]);
        let v = m(&[&[0.3, -1.2, 2.5]]);
        let p = concept_activation_matrix(&v, &v).unwrap();
        assert!((p.values.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(matches!(
            concept_activation_matrix(&m(&[&[1.0]]), &m(&[&[1.0, 0.0]])),
            Err(SimError::DimMismatch(_))
        ));
    }

    #[test]
    fn conditionals_examples() {
        let single = concept_conditionals(&m(&[&[0.3], &[-0.9]]), 10.0);
        assert_eq!(single.as_slice(), &[1.0, 1.0]);
        let flat = concept_conditionals(&m(&[&[0.4, 0.4, 0.4, 0.4]]), 10.0);
        for v in flat.as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        // e^2/(e^2+1) and 1/(e^2+1), evaluated independently.
        let two = concept_conditionals(&m(&[&[2.0, 0.0]]), 1.0);
        assert!((two.get(0, 0) - 0.8807970779778824).abs() < 1e-15);
        assert!((two.get(0, 1) - 0.11920292202211755).abs() < 1e-15);
    }

    #[test]
    fn membership_examples() {
        assert_eq!(membership_probs(&[5.0, 1.0, 3.0], 2, 1.0, 0.5), vec![1.0, 0.0, 0.5]);
        assert_eq!(
            membership_probs(&[5.0, 1.0, 3.0, 4.0], 2, 1.0, 1.0),
            vec![1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(membership_probs(&[2.0; 4], 2, 1.0, 0.9), vec![1.0, 0.9, 0.0, 0.0]);
        assert_eq!(membership_probs(&[0.1, 0.7], 1, 0.8, 0.5), vec![0.0, 0.8]);
    }

    #[test]
    fn params_validation() {
        let p = SimParams::default();
        assert!(p.validate(100, 763).is_ok());
        assert!(p.validate(99, 763).is_err());
        assert!(SimParams { top_z: 0, ..p }.validate(10, 5).is_err());
        assert!(SimParams {
            membership_start: 0.5,
            membership_end: 0.9,
            ..p
        }
        .validate(100, 5)
        .is_err());
        assert!(SimParams { min_prob: 0.5, ..p }.validate(100, 5).is_err());
        assert!(SimParams { temperature: 0.0, ..p }.validate(100, 5).is_err());
        assert!(SimParams { lambda: -1.0, ..p }.validate(100, 5).is_err());
    }

    fn small_params() -> SimParams {
        SimParams {
            lambda: 1.0,
            top_z: 2,
            temperature: 1.0,
            membership_start: 1.0,
            membership_end: 0.97,
            min_prob: 1e-7,
        }
    }

    #[test]
    fn frozen_four_image_instance() {
        // Values from an independent transliteration of the formula in Python.
        let p = m(&[&[0.9, 0.1], &[0.8, 0.2], &[0.1, 0.9], &[0.2, 0.8]]);
        let cond = concept_conditionals(&p, 1.0);
        let sim = soft_wpmi(&cond, &[4.0, 3.0, 2.0, 1.0], &small_params());
        let expected = [-0.09911115462795794, -1.4622196164754047];
        for (a, b) in sim.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn single_concept_collapses_to_zero() {
        let cond = concept_conditionals(&m(&[&[0.2], &[0.5], &[-0.1]]), 10.0);
        let params = SimParams {
            top_z: 2,
            ..SimParams::default()
        };
        assert_eq!(soft_wpmi(&cond, &[1.0, 2.0, 3.0], &params), vec![0.0]);
        assert_eq!(hard_wpmi(&cond, &[1.0, 2.0, 3.0], &params), vec![0.0]);
    }

    #[test]
    fn empty_evidence_is_prior_only() {
        let p = m(&[&[0.9, 0.1], &[0.8, 0.2], &[0.1, 0.9]]);
        let cond = concept_conditionals(&p, 10.0);
        let params = SimParams {
            lambda: 1.5,
            ..small_params()
        };
        let sim = soft_wpmi_with_membership(&cond, &[0.0, 0.0, 0.0], &params);
        for (j, v) in sim.iter().enumerate() {
            let mean = (0..3).map(|i| cond.get(i, j)).sum::<f64>() / 3.0;
            assert!((v + 1.5 * mean.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_wpmi_uniform_closed_form() {
        let (n, mm) = (5, 4);
        let cond = Matrix::new(n, mm, vec![0.25; n * mm]).unwrap();
        let params = SimParams {
            top_z: n,
            ..small_params()
        };
        let sim = hard_wpmi(&cond, &[1.0, 2.0, 3.0, 4.0, 5.0], &params);
        let expected = n as f64 * 0.25f64.ln() - 0.25f64.ln();
        for v in sim {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_neuron_duplicates_row() {
        let p = ConceptActivationMatrix {
            values: m(&[&[0.9, 0.1, 0.3], &[0.8, 0.2, -0.4], &[0.1, 0.9, 0.0], &[0.2, 0.8, 0.5]]),
            normalized: true,
        };
        let acts = m(&[&[1.0, 0.3, 1.0], &[2.0, 0.1, 2.0], &[0.5, 0.9, 0.5], &[0.0, 0.2, 0.0]]);
        let s = similarity_matrix(&p, &acts, &small_params(), "l").unwrap();
        assert_eq!(s.values.row(0), s.values.row(2));
        let single = similarity_matrix(&p, &m(&[&[0.3], &[0.1], &[0.9], &[0.2]]), &small_params(), "l").unwrap();
        assert_eq!(single.values.row(0), s.values.row(1));
    }

    #[test]
    fn layer_rejects_wrong_probe_count() {
        let p = ConceptActivationMatrix {
            values: m(&[&[0.9, 0.1], &[0.8, 0.2]]),
            normalized: true,
        };
        let k = SimilarityKernel::new(
            &p,
            SimParams {
                top_z: 1,
                ..small_params()
            },
        )
        .unwrap();
        assert!(matches!(k.layer(&m(&[&[1.0]]), "x"), Err(SimError::DimMismatch(_))));
    }

    #[test]
    fn top_images_matches_full_ranking() {
        let q = [0.3, 0.9, 0.3, -1.0, 0.9, 0.5];
        let full = rank_images(&q);
        assert_eq!(full, vec![1, 4, 5, 0, 2, 3]);
        for z in 0..=q.len() {
            assert_eq!(top_images(&q, z), full[..z].to_vec());
        }
    }
}
