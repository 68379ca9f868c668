//! Model files: magic "HDCM", version u16, K u32, D u32, L u32, normalized
//! u8, bits u8 (0 for float), encoder seed u64, preprocessing tag u8 and
//! gain f64, quantization scale f64 (quantized only), then the class rows,
//! row-major, as f64 or as the narrowest of i8/i16/i32 holding `bits`.

use std::path::Path;

use super::{Encoder, HdcError, HdcModel, Preprocess, QuantizedModel};

const MAGIC: &[u8; 4] = b"HDCM";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum StoredModel {
    Float(HdcModel),
    Quantized(QuantizedModel),
}

impl StoredModel {
    pub fn num_classes(&self) -> usize {
        match self {
            StoredModel::Float(m) => m.num_classes(),
            StoredModel::Quantized(q) => q.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            StoredModel::Float(m) => m.dim(),
            StoredModel::Quantized(q) => q.dim(),
        }
    }
}

/// A model together with what is needed to regenerate its encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub input_dim: usize,
    pub seed: u64,
    pub preprocess: Preprocess,
    pub model: StoredModel,
}

fn int_width(bits: u32) -> usize {
    match bits {
        0..=8 => 1,
        9..=16 => 2,
        _ => 4,
    }
}

impl ModelFile {
    pub fn encoder(&self) -> Encoder {
        Encoder::with_preprocess(self.input_dim, self.model.dim(), self.seed, self.preprocess)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.model.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.model.num_classes() as u32).to_le_bytes());
        let (normalized, bits) = match &self.model {
            StoredModel::Float(m) => (m.normalized, 0),
            StoredModel::Quantized(q) => (true, q.bits),
        };
        out.push(normalized as u8);
        out.push(bits as u8);
        out.extend_from_slice(&self.seed.to_le_bytes());
        let (tag, gain) = self.preprocess.tag();
        out.push(tag);
        out.extend_from_slice(&gain.to_le_bytes());
        match &self.model {
            StoredModel::Float(m) => {
                for x in m.classes.iter().flatten() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            StoredModel::Quantized(q) => {
                out.extend_from_slice(&q.scale.to_le_bytes());
                let w = int_width(q.bits);
                for &v in q.classes.iter().flatten() {
                    out.extend_from_slice(&(v as i32).to_le_bytes()[..w]);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HdcError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], HdcError> {
            if bytes.len() - pos < n {
                return Err(HdcError::Format("truncated model file".into()));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(HdcError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().expect("2"));
        if version != VERSION {
            return Err(HdcError::Format(format!("unsupported version {version}")));
        }
        let u32_ = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4")) as usize;
        let k = u32_(take(4)?);
        let d = u32_(take(4)?);
        let l = u32_(take(4)?);
        let normalized = take(1)?[0] != 0;
        let bits = take(1)?[0] as u32;
        let seed = u64::from_le_bytes(take(8)?.try_into().expect("8"));
        let tag = take(1)?[0];
        let gain = f64::from_le_bytes(take(8)?.try_into().expect("8"));
        let preprocess = Preprocess::from_tag(tag, gain).ok_or(HdcError::Format("unknown preprocessing".into()))?;
        let model = if bits == 0 {
            let raw = take(8 * d * l)?;
            let flat: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
            StoredModel::Float(HdcModel {
                classes: flat.chunks(d.max(1)).map(|c| c.to_vec()).take(l).collect(),
                normalized,
                label_names: None,
            })
        } else {
            if !(2..=32).contains(&bits) {
                return Err(HdcError::Bits(bits));
            }
            let scale = f64::from_le_bytes(take(8)?.try_into().expect("8"));
            let w = int_width(bits);
            let raw = take(w * d * l)?;
            let flat: Vec<i64> = raw
                .chunks_exact(w)
                .map(|c| match w {
                    1 => c[0] as i8 as i64,
                    2 => i16::from_le_bytes([c[0], c[1]]) as i64,
                    _ => i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as i64,
                })
                .collect();
            StoredModel::Quantized(QuantizedModel {
                classes: flat.chunks(d.max(1)).map(|c| c.to_vec()).take(l).collect(),
                scale,
                bits,
            })
        };
        if pos != bytes.len() {
            return Err(HdcError::Format("trailing bytes in model file".into()));
        }
        Ok(ModelFile { input_dim: k, seed, preprocess, model })
    }

    pub fn save(&self, path: &Path) -> Result<(), HdcError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| HdcError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HdcError> {
        let bytes = std::fs::read(path).map_err(|e| HdcError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdc::quantize_model;

    fn sample() -> HdcModel {
        HdcModel {
            classes: vec![vec![0.6, -0.8, 0.0], vec![0.0, 0.28, -0.96]],
            normalized: true,
            label_names: None,
        }
    }

    #[test]
    fn float_and_quantized_roundtrip() {
        let f = ModelFile { input_dim: 5, seed: 42, preprocess: Preprocess::default(), model: StoredModel::Float(sample()) };
        assert_eq!(ModelFile::from_bytes(&f.to_bytes()).unwrap(), f);
        for bits in [8, 16, 32] {
            let q = quantize_model(&sample(), bits).unwrap();
            let m = ModelFile { input_dim: 5, seed: 1, preprocess: Preprocess::Identity, model: StoredModel::Quantized(q) };
            let bytes = m.to_bytes();
            assert_eq!(ModelFile::from_bytes(&bytes).unwrap(), m);
            assert_eq!(bytes.len(), 4 + 2 + 12 + 2 + 8 + 9 + 8 + 6 * int_width(bits));
        }
    }

    #[test]
    fn rejects_corruption() {
        let f = ModelFile { input_dim: 5, seed: 42, preprocess: Preprocess::default(), model: StoredModel::Float(sample()) };
        let bytes = f.to_bytes();
        assert!(matches!(ModelFile::from_bytes(&bytes[..bytes.len() - 3]), Err(HdcError::Format(_))));
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(ModelFile::from_bytes(&bad), Err(HdcError::Format(_))));
    }
}
