use super::{argmax, Classifier, HdcError, HdcModel};

/// Class hypervectors as symmetric signed integers: `C' ≈ scale · q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedModel {
    pub classes: Vec<Vec<i64>>,
    pub scale: f64,
    pub bits: u32,
}

/// Symmetric max-abs quantization of a normalized model to `bits`-bit integers.
pub fn quantize_model(model: &HdcModel, bits: u32) -> Result<QuantizedModel, HdcError> {
    if !(2..=32).contains(&bits) {
        return Err(HdcError::Bits(bits));
    }
    if !model.normalized {
        return Err(HdcError::NotNormalized);
    }
    let qmax = ((1i64 << (bits - 1)) - 1) as f64;
    let max_abs = model.classes.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if max_abs == 0.0 {
        return Err(HdcError::ZeroNorm);
    }
    let scale = max_abs / qmax;
    let classes = model
        .classes
        .iter()
        .map(|c| c.iter().map(|&x| (x / scale).round().clamp(-qmax, qmax) as i64).collect())
        .collect();
    Ok(QuantizedModel { classes, scale, bits })
}

impl QuantizedModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.len())
    }

    pub fn dequantize(&self) -> HdcModel {
        HdcModel {
            classes: self.classes.iter().map(|c| c.iter().map(|&q| q as f64 * self.scale).collect()).collect(),
            normalized: true,
            label_names: None,
        }
    }

    /// Class vectors as reals in integer units (no scale applied).
    pub fn classes_f64(&self) -> Vec<Vec<f64>> {
        self.classes.iter().map(|c| c.iter().map(|&q| q as f64).collect()).collect()
    }
}

impl Classifier for QuantizedModel {
    /// Integer dot products `H · q^l`, the quantity the encrypted pipeline returns.
    fn scores(&self, h: &[f64]) -> Result<Vec<f64>, HdcError> {
        if h.len() != self.dim() {
            return Err(HdcError::Dimension { expected: self.dim(), found: h.len() });
        }
        Ok(self.classes.iter().map(|c| c.iter().zip(h).map(|(&q, &x)| q as f64 * x).sum()).collect())
    }

    fn classify(&self, h: &[f64]) -> Result<(usize, Vec<f64>), HdcError> {
        let s = self.scores(h)?;
        Ok((argmax(&s).ok_or(HdcError::EmptyModel)?, s))
    }
}

/// Picks the candidate scale with the best accuracy; ties go to the larger scale.
/// Candidates whose evaluation fails are skipped.
pub fn scale_search<F>(candidates: &[u32], mut accuracy: F) -> Result<(u32, Vec<(u32, Option<f64>)>), HdcError>
where
    F: FnMut(u32) -> Result<f64, HdcError>,
{
    if candidates.is_empty() {
        return Err(HdcError::EmptyGrid);
    }
    let mut table = Vec::with_capacity(candidates.len());
    let mut best: Option<(u32, f64)> = None;
    for &c in candidates {
        let acc = match accuracy(c) {
            Ok(a) => Some(a),
            Err(e) => {
                log::info!("scale 2^{c} skipped: {e}");
                None
            }
        };
        table.push((c, acc));
        if let Some(a) = acc {
            let better = match best {
                None => true,
                Some((bc, ba)) => a > ba || (a == ba && c > bc),
            };
            if better {
                best = Some((c, a));
            }
        }
    }
    let (c, _) = best.ok_or(HdcError::EmptyGrid)?;
    Ok((c, table))
}

/// Fixed-point simulation of the encrypted dot product: the query is rounded
/// to multiples of `2^-query_scale_log2`, classes to `2^-class_scale_log2`,
/// and the products are accumulated exactly.
pub fn fixed_point_scores(classes: &[Vec<f64>], h: &[f64], query_scale_log2: u32, class_scale_log2: u32) -> Vec<f64> {
    let sq = (query_scale_log2 as f64).exp2();
    let sc = (class_scale_log2 as f64).exp2();
    let hq: Vec<f64> = h.iter().map(|x| (x * sq).round()).collect();
    classes
        .iter()
        .map(|c| c.iter().zip(&hq).map(|(&x, &q)| (x * sc).round() * q).sum::<f64>() / (sq * sc))
        .collect()
}
