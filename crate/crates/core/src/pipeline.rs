//! Glue used by the command-line tools, the benchmarks and the acceptance
//! suite: training from a dataset, plaintext and encrypted evaluation, and
//! the fixed-point scale search.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::ckks::{CkksParams, Evaluator, GaloisKeys, SecretKey};
use crate::dataset::Dataset;
use crate::hdc::{
    argmax, evaluate_accuracy, fixed_point_scores, scale_search, Classifier, Encoder, HdcError, HdcModel,
    TrainConfig,
};
use crate::protocol::{
    class_scale_for, client_finalize, encrypt_hypervector, server_similarity, Layout, ProtocolError, QueryMessage,
    ServerModel,
};

pub struct Trained {
    pub model: HdcModel,
    /// Training accuracy after each iterative epoch.
    pub history: Vec<f64>,
}

/// Single-pass training, unit-norm rescaling of the classes, iterative
/// refinement, then final normalization.
pub fn train(encoder: &Encoder, data: &Dataset, cfg: &TrainConfig) -> Result<Trained, HdcError> {
    let hvs = encoder.encode_batch(&data.features)?;
    train_encoded(&hvs, &data.labels, data.num_classes, cfg)
}

pub fn train_encoded(hvs: &[Vec<f64>], labels: &[usize], num_classes: usize, cfg: &TrainConfig) -> Result<Trained, HdcError> {
    if hvs.is_empty() {
        return Err(HdcError::EmptyDataset);
    }
    let mut model = HdcModel::train_single_pass(hvs, labels, num_classes)?;
    // Start from class means: the update step then has the same size relative
    // to a class whatever the sample count. Empty classes stay zero.
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    for (c, &n) in model.classes.iter_mut().zip(&counts) {
        if n > 0 {
            c.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    let history = model.iterative_train(hvs, labels, cfg)?;
    Ok(Trained { model: model.normalize()?, history })
}

pub fn plain_accuracy<C: Classifier + ?Sized>(model: &C, hvs: &[Vec<f64>], labels: &[usize]) -> Result<f64, HdcError> {
    evaluate_accuracy(model, hvs, labels)
}

pub fn plain_predictions<C: Classifier + ?Sized>(model: &C, hvs: &[Vec<f64>]) -> Result<Vec<usize>, HdcError> {
    hvs.iter().map(|h| model.classify(h).map(|(l, _)| l)).collect()
}

/// Runs every hypervector through the encrypted pipeline. Queries pass
/// through their wire encoding so the server sees exactly what a remote
/// client would send.
pub fn encrypted_predictions(
    server: &ServerModel,
    sk: &SecretKey,
    gks: &GaloisKeys,
    hvs: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<(usize, Vec<f64>)>, ProtocolError> {
    let params = server.params();
    let ev = Evaluator::new(params);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    hvs.iter()
        .map(|h| {
            let q = encrypt_hypervector(h, params, sk, &mut rng)?;
            let wire = q.to_frame(params);
            let q = QueryMessage::from_payload(&wire.payload, params)?;
            let s = server_similarity(&q, server, gks, &ev)?;
            client_finalize(&s, sk)
        })
        .collect()
}

pub fn accuracy_of(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predictions.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

pub fn agreement(a: &[usize], b: &[usize]) -> f64 {
    accuracy_of(a, b)
}

/// Accuracy of the fixed-point simulation of the encrypted pipeline for one
/// candidate query scale, using the server's class-scale policy.
pub fn fixed_point_accuracy(
    params: &CkksParams,
    classes: &[Vec<f64>],
    hvs: &[Vec<f64>],
    labels: &[usize],
    query_scale_log2: u32,
) -> Result<f64, HdcError> {
    if hvs.is_empty() {
        return Err(HdcError::EmptyDataset);
    }
    let layout = Layout::new(classes.first().map_or(0, |c| c.len()), params);
    let (q, c) = class_scale_for(params, &layout, classes, query_scale_log2)
        .map_err(|e| HdcError::Config(e.to_string()))?;
    if q != query_scale_log2 {
        return Err(HdcError::Config(format!("query scale 2^{query_scale_log2} does not fit")));
    }
    let correct = hvs
        .iter()
        .zip(labels)
        .filter(|(h, &l)| argmax(&fixed_point_scores(classes, h, q, c)) == Some(l))
        .count();
    Ok(correct as f64 / hvs.len() as f64)
}

/// Exhaustive search over query scales on a validation split.
pub fn search_query_scale(
    params: &CkksParams,
    classes: &[Vec<f64>],
    val_hvs: &[Vec<f64>],
    val_labels: &[usize],
    grid: &[u32],
) -> Result<(u32, Vec<(u32, Option<f64>)>), HdcError> {
    scale_search(grid, |s| fixed_point_accuracy(params, classes, val_hvs, val_labels, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::keygen;
    use crate::hdc::{quantize_model, ModelFile, Preprocess, StoredModel};

    fn blobs() -> (Encoder, Dataset) {
        (Encoder::new(12, 256, 1), Dataset::synthetic_blobs(4, 12, 60, 0.15, 2))
    }

    #[test]
    fn training_reaches_high_accuracy_on_blobs() {
        let (enc, data) = blobs();
        let t = train(&enc, &data, &TrainConfig { epochs: 5, ..Default::default() }).unwrap();
        assert_eq!(t.history.len(), 5);
        assert!(t.model.normalized);
        let hvs = enc.encode_batch(&data.features).unwrap();
        assert!(plain_accuracy(&t.model, &hvs, &data.labels).unwrap() > 0.95);
        // deterministic re-run
        let again = train(&enc, &data, &TrainConfig { epochs: 5, ..Default::default() }).unwrap();
        assert_eq!(again.model, t.model);
    }

    #[test]
    fn encrypted_predictions_follow_the_quantized_model() {
        let (enc, data) = blobs();
        let t = train(&enc, &data, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
        let q = quantize_model(&t.model, 16).unwrap();
        let file = ModelFile { input_dim: 12, seed: 1, preprocess: Preprocess::default(), model: StoredModel::Quantized(q.clone()) };
        let server = ServerModel::new(&file, &CkksParams::standard(12).unwrap()).unwrap();
        let (sk, gks) = keygen(server.params(), &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let hvs = enc.encode_batch(&data.features[..20 * 12]).unwrap();
        let enc_pred: Vec<usize> = encrypted_predictions(&server, &sk, &gks, &hvs, 4).unwrap().into_iter().map(|p| p.0).collect();
        let plain = plain_predictions(&q, &hvs).unwrap();
        assert_eq!(enc_pred, plain);
    }

    #[test]
    fn scale_search_picks_a_best_candidate() {
        let (enc, data) = blobs();
        let t = train(&enc, &data, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        let params = CkksParams::standard(13).unwrap();
        let hvs = enc.encode_batch(&data.features).unwrap();
        let grid = [18, 20, 22, 24, 26, 28, 30];
        let (best, table) = search_query_scale(&params, &t.model.classes, &hvs, &data.labels, &grid).unwrap();
        let best_acc = table.iter().find(|(s, _)| *s == best).unwrap().1.unwrap();
        assert!(table.iter().all(|(_, a)| a.is_none_or(|a| a <= best_acc)));
        let low = fixed_point_accuracy(&params, &t.model.classes, &hvs, &data.labels, 1).unwrap();
        assert!(low < best_acc);
    }
}
