use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, cosine_similarity, dot, norm, Classifier, HdcError};

/// Class hypervectors `C^l`, one per label.
#[derive(Clone, Debug, PartialEq)]
pub struct HdcModel {
    pub classes: Vec<Vec<f64>>,
    pub normalized: bool,
    pub label_names: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.035, epochs: 20, shuffle_seed: 0 }
    }
}

fn check_labels(hvs: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<usize, HdcError> {
    if hvs.len() != labels.len() {
        return Err(HdcError::Dimension { expected: hvs.len(), found: labels.len() });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(HdcError::Label { label: l, classes: num_classes });
    }
    let dim = hvs.first().map_or(0, |h| h.len());
    if let Some(h) = hvs.iter().find(|h| h.len() != dim) {
        return Err(HdcError::Dimension { expected: dim, found: h.len() });
    }
    Ok(dim)
}

impl HdcModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.len())
    }

    /// `C^l = Σ H_j` over the samples of class `l`. A class without samples
    /// keeps a zero vector and a warning is logged.
    pub fn train_single_pass(hvs: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<Self, HdcError> {
        let dim = check_labels(hvs, labels, num_classes)?;
        let mut classes = vec![vec![0.0; dim]; num_classes];
        let mut counts = vec![0usize; num_classes];
        for (h, &l) in hvs.iter().zip(labels) {
            counts[l] += 1;
            for (c, &x) in classes[l].iter_mut().zip(h) {
                *c += x;
            }
        }
        for (l, &c) in counts.iter().enumerate() {
            if c == 0 {
                log::warn!("class {l} has no training samples; its hypervector stays zero");
            }
        }
        Ok(HdcModel { classes, normalized: false, label_names: None })
    }

    /// Mispredicted queries pull the true class toward `H` and push the
    /// predicted one away, each weighted by `η(1 − δ)`. Returns the training
    /// accuracy measured after every epoch.
    pub fn iterative_train(
        &mut self,
        hvs: &[Vec<f64>],
        labels: &[usize],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>, HdcError> {
        if cfg.learning_rate <= 0.0 || !cfg.learning_rate.is_finite() {
            return Err(HdcError::Config("learning rate must be positive".into()));
        }
        check_labels(hvs, labels, self.num_classes())?;
        let mut order: Vec<usize> = (0..hvs.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.shuffle_seed.wrapping_add(epoch as u64));
            order.shuffle(&mut rng);
            for &i in &order {
                self.update(&hvs[i], labels[i], cfg.learning_rate)?;
            }
            history.push(super::evaluate_accuracy(self, hvs, labels)?);
        }
        Ok(history)
    }

    /// One step of the iterative rule; returns whether the model changed.
    pub fn update(&mut self, h: &[f64], label: usize, learning_rate: f64) -> Result<bool, HdcError> {
        let (pred, scores) = self.classify(h)?;
        if pred == label {
            return Ok(false);
        }
        let up = learning_rate * (1.0 - scores[label]);
        let down = learning_rate * (1.0 - scores[pred]);
        for (c, &x) in self.classes[label].iter_mut().zip(h) {
            *c += up * x;
        }
        for (c, &x) in self.classes[pred].iter_mut().zip(h) {
            *c -= down * x;
        }
        self.normalized = false;
        Ok(true)
    }

    /// `C'^l = C^l / ||C^l||`.
    pub fn normalize(&self) -> Result<Self, HdcError> {
        let mut out = self.clone();
        for c in out.classes.iter_mut() {
            let n = norm(c);
            if n == 0.0 {
                return Err(HdcError::ZeroNorm);
            }
            c.iter_mut().for_each(|x| *x /= n);
        }
        out.normalized = true;
        Ok(out)
    }
}

impl Classifier for HdcModel {
    /// Cosine similarity to each class.
    fn scores(&self, h: &[f64]) -> Result<Vec<f64>, HdcError> {
        if h.len() != self.dim() {
            return Err(HdcError::Dimension { expected: self.dim(), found: h.len() });
        }
        self.classes.iter().map(|c| cosine_similarity(h, c)).collect()
    }

    fn classify(&self, h: &[f64]) -> Result<(usize, Vec<f64>), HdcError> {
        let s = self.scores(h)?;
        Ok((argmax(&s).ok_or(HdcError::EmptyModel)?, s))
    }
}

/// Decision-equivalent scoring for a normalized model: the plain dot product,
/// skipping the common division by `||H||`.
pub fn dot_scores(classes: &[Vec<f64>], h: &[f64]) -> Vec<f64> {
    classes.iter().map(|c| dot(h, c)).collect()
}
