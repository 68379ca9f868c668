//! Hyperdimensional encoding, training and quantization.

mod encoder;
mod io;
mod model;
mod quantize;

pub use encoder::{Encoder, Preprocess};
pub use io::{ModelFile, StoredModel};
pub use model::{dot_scores, HdcModel, TrainConfig};
pub use quantize::{fixed_point_scores, quantize_model, scale_search, QuantizedModel};

#[derive(Debug, thiserror::Error)]
pub enum HdcError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("model has no classes")]
    EmptyModel,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unsupported bit width {0} (expected 2..=32)")]
    Bits(u32),
    #[error("model must be normalized first")]
    NotNormalized,
    #[error("no usable candidate in the scale grid")]
    EmptyGrid,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub trait Classifier {
    fn scores(&self, h: &[f64]) -> Result<Vec<f64>, HdcError>;
    /// Predicted label (ties go to the lowest index) and the scores.
    fn classify(&self, h: &[f64]) -> Result<(usize, Vec<f64>), HdcError>;
}

/// Index of the maximum; the first one wins ties. NaN entries are skipped.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, HdcError> {
    if a.len() != b.len() {
        return Err(HdcError::Dimension { expected: a.len(), found: b.len() });
    }
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        return Err(HdcError::ZeroNorm);
    }
    Ok(dot(a, b) / denom)
}

pub fn evaluate_accuracy<C: Classifier + ?Sized>(model: &C, hvs: &[Vec<f64>], labels: &[usize]) -> Result<f64, HdcError> {
    if hvs.is_empty() {
        return Err(HdcError::EmptyDataset);
    }
    if hvs.len() != labels.len() {
        return Err(HdcError::Dimension { expected: hvs.len(), found: labels.len() });
    }
    let mut correct = 0usize;
    for (h, &l) in hvs.iter().zip(labels) {
        if model.classify(h)?.0 == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / hvs.len() as f64)
}
