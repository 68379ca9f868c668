//! Labelled feature sets: MNIST IDX ingestion, synthetic blobs and a
//! canonical binary container ("HEDS": magic, version u16, count u32,
//! dim u32, classes u32, f32 features row-major, u8 labels).

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const MAGIC: &[u8; 4] = b"HEDS";
const VERSION: u16 = 1;

pub const DESK_TRAIN: usize = 10_000;
pub const DESK_VAL: usize = 2_000;
pub const DESK_TEST: usize = 2_000;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<f32>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io { path: path.to_owned(), source })
}

fn be_u32(b: &[u8], at: usize) -> Result<u32, DataError> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().expect("4")))
        .ok_or(DataError::Truncated { needed: at + 4, have: b.len() })
}

/// Parses an IDX3 image file into `(count, rows*cols, pixels/255)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(DataError::BadMagic { expected: IDX_IMAGES, found: magic });
    }
    let count = be_u32(bytes, 4)? as usize;
    let dim = be_u32(bytes, 8)? as usize * be_u32(bytes, 12)? as usize;
    let needed = 16 + count * dim;
    if bytes.len() < needed {
        return Err(DataError::Truncated { needed, have: bytes.len() });
    }
    Ok((count, dim, bytes[16..needed].iter().map(|&p| p as f32 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(DataError::BadMagic { expected: IDX_LABELS, found: magic });
    }
    let count = be_u32(bytes, 4)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(DataError::Truncated { needed, have: bytes.len() });
    }
    Ok(bytes[8..needed].iter().map(|&l| l as usize).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistPart {
    Train,
    Test,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn slice(&self, range: Range<usize>) -> Dataset {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        Dataset {
            features: self.features[start * self.dim..end * self.dim].to_vec(),
            labels: self.labels[start..end].to_vec(),
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    pub fn from_idx(images: &Path, labels: &Path) -> Result<Self, DataError> {
        let (count, dim, features) = parse_idx_images(&read(images)?)?;
        let labels = parse_idx_labels(&read(labels)?)?;
        if labels.len() != count {
            return Err(DataError::CountMismatch { images: count, labels: labels.len() });
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
        Ok(Dataset { features, labels, dim, num_classes })
    }

    /// Loads one half of MNIST from a directory holding the four standard IDX files.
    pub fn mnist(dir: &Path, part: MnistPart) -> Result<Self, DataError> {
        let prefix = match part {
            MnistPart::Train => "train",
            MnistPart::Test => "t10k",
        };
        Self::from_idx(
            &dir.join(format!("{prefix}-images-idx3-ubyte")),
            &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        )
    }

    /// Gaussian blobs around random centers in `[0, 1]^dim`; `spread` is the
    /// per-coordinate standard deviation.
    pub fn synthetic_blobs(classes: usize, dim: usize, per_class: usize, spread: f32, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f32>> = (0..classes).map(|_| (0..dim).map(|_| rng.random::<f32>()).collect()).collect();
        let mut features = Vec::with_capacity(classes * per_class * dim);
        let mut labels = Vec::with_capacity(classes * per_class);
        for i in 0..classes * per_class {
            let l = i % classes;
            for &c in &centers[l] {
                let z: f32 = rng.sample(StandardNormal);
                features.push(c + spread * z);
            }
            labels.push(l);
        }
        Dataset { features, labels, dim, num_classes: classes }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.features.len() * 4 + self.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.len(), self.dim, self.num_classes] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for f in &self.features {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out.extend(self.labels.iter().map(|&l| l as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < 18 {
            return Err(DataError::Truncated { needed: 18, have: bytes.len() });
        }
        if &bytes[..4] != MAGIC {
            return Err(DataError::Malformed("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(DataError::Malformed(format!("unsupported version {version}")));
        }
        let le = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4")) as usize;
        let (count, dim, num_classes) = (le(6), le(10), le(14));
        let needed = 18 + count * dim * 4 + count;
        if bytes.len() != needed {
            return Err(DataError::Truncated { needed, have: bytes.len() });
        }
        let feat_end = 18 + count * dim * 4;
        let features = bytes[18..feat_end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
        let labels: Vec<usize> = bytes[feat_end..].iter().map(|&l| l as usize).collect();
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::Malformed(format!("label {l} >= {num_classes} classes")));
        }
        Ok(Dataset { features, labels, dim, num_classes })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_bytes()).map_err(|source| DataError::Io { path: path.to_owned(), source })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_bytes(&read(path)?)
    }
}

/// Train, validation and test partitions with disjoint samples.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// MNIST partitions: train and validation are consecutive, non-overlapping
/// ranges of the official training file; test comes from the test file.
/// `full` takes 58000/2000/10000 instead of the desk-scale 10000/2000/2000.
pub fn mnist_splits(dir: &Path, full: bool) -> Result<Splits, DataError> {
    let train_file = Dataset::mnist(dir, MnistPart::Train)?;
    let test_file = Dataset::mnist(dir, MnistPart::Test)?;
    let (n_train, n_test) = if full { (train_file.len() - DESK_VAL, test_file.len()) } else { (DESK_TRAIN, DESK_TEST) };
    Ok(Splits {
        train: train_file.slice(0..n_train),
        val: train_file.slice(n_train..n_train + DESK_VAL),
        test: test_file.slice(0..n_test),
    })
}

/// Dataset root: `HEHDC_DATA_DIR` if set, else `data/` under the current directory.
pub fn data_root() -> PathBuf {
    std::env::var_os("HEHDC_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

/// Locates the MNIST directory below `root`, accepting either `root/mnist` or `root` itself.
pub fn find_mnist(root: &Path) -> Option<PathBuf> {
    [root.join("mnist"), root.to_path_buf()]
        .into_iter()
        .find(|d| d.join("train-images-idx3-ubyte").is_file() && d.join("t10k-labels-idx1-ubyte").is_file())
}
