//! Dataset loading and preparation for amplitude encoding.
//!
//! Sources are MNIST IDX files (raw or gzip-compressed), numeric CSV feature
//! tables, and a synthetic two-blob generator.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic number at offset 0: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated at offset {offset}: expected {expected} bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        expected: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} at index {index} outside 0..{classes}")]
    LabelOutOfRange {
        path: PathBuf,
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },
    #[error("target dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("target dimension {target} smaller than feature dimension {features}")]
    TargetTooSmall { target: usize, features: usize },
    #[error("row {0} is all zeros and cannot be amplitude-encoded")]
    ZeroRow(usize),
    #[error("cannot pool {side}×{side} images down to {target}×{target}")]
    BadDownsample { side: usize, target: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Row-major feature matrix with integer labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(DataError::Invalid(format!(
                "label {l} at row {i} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            split: self.split,
        }
    }

    /// Keeps only rows whose label is in `classes`, relabelled to the
    /// position of that label in `classes`.
    pub fn filter_classes(&self, classes: &[usize]) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(pos) = classes.iter().position(|&c| c == l) {
                features.extend_from_slice(self.row(i));
                labels.push(pos);
            }
        }
        Dataset {
            features,
            dim: self.dim,
            labels,
            n_classes: classes.len(),
            split: self.split,
        }
    }

    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for &i in indices {
            h[self.labels[i]] += 1;
        }
        h
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a whole file, transparently inflating gzip content.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
            expected: offset + 4,
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Loads an IDX image/label file pair. Pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let img = read_maybe_gz(images_path)?;
    check_magic(&img, IDX_IMAGES_MAGIC, images_path)?;
    let count = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let dim = rows * cols;
    let need = 16 + count * dim;
    if img.len() < need {
        return Err(DataError::Truncated {
            path: images_path.to_path_buf(),
            offset: img.len(),
            expected: need,
        });
    }

    let lab = read_maybe_gz(labels_path)?;
    check_magic(&lab, IDX_LABELS_MAGIC, labels_path)?;
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if lab.len() < 8 + n_labels {
        return Err(DataError::Truncated {
            path: labels_path.to_path_buf(),
            offset: lab.len(),
            expected: 8 + n_labels,
        });
    }
    if n_labels != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: n_labels,
        });
    }

    let labels: Vec<usize> = lab[8..8 + count].iter().map(|&b| b as usize).collect();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(DataError::LabelOutOfRange {
            path: labels_path.to_path_buf(),
            index,
            label,
            classes: 10,
        });
    }
    let features = img[16..need].iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(features, dim, labels, 10, split)
}

/// Writes raw (uncompressed) IDX image and label files.
pub fn write_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    side: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    assert_eq!(pixels.len(), side * side * labels.len());
    let mut img = Vec::with_capacity(16 + pixels.len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(pixels);
    File::create(images_path)
        .and_then(|mut f| f.write_all(&img))
        .map_err(io_err(images_path))?;

    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    File::create(labels_path)
        .and_then(|mut f| f.write_all(&lab))
        .map_err(io_err(labels_path))
}

/// Shrinks square images to `target × target`: the border is cropped
/// symmetrically to the largest multiple of `target`, then non-overlapping
/// blocks are averaged. 28×28 MNIST becomes a 24×24 crop pooled in 3×3 blocks.
pub fn downsample_square(dataset: &Dataset, target: usize) -> Result<Dataset> {
    let side = (dataset.dim as f64).sqrt().round() as usize;
    if side * side != dataset.dim || target == 0 || target > side {
        return Err(DataError::BadDownsample { side, target });
    }
    let block = side / target;
    let crop = (side - block * target) / 2;
    let norm = (block * block) as f64;
    let mut features = Vec::with_capacity(dataset.len() * target * target);
    for row in dataset.rows() {
        for by in 0..target {
            for bx in 0..target {
                let mut acc = 0.0;
                for dy in 0..block {
                    let y = crop + by * block + dy;
                    for dx in 0..block {
                        acc += row[y * side + crop + bx * block + dx];
                    }
                }
                features.push(acc / norm);
            }
        }
    }
    Dataset::new(
        features,
        target * target,
        dataset.labels.clone(),
        dataset.n_classes,
        dataset.split,
    )
}

/// Zero-pads every row to `target_dim` and rescales it to unit L2 norm.
pub fn prepare_for_encoding(dataset: &Dataset, target_dim: usize) -> Result<Dataset> {
    if !target_dim.is_power_of_two() {
        return Err(DataError::NotPowerOfTwo(target_dim));
    }
    if target_dim < dataset.dim {
        return Err(DataError::TargetTooSmall {
            target: target_dim,
            features: dataset.dim,
        });
    }
    let mut features = vec![0.0; dataset.len() * target_dim];
    for (i, (src, dst)) in dataset
        .rows()
        .zip(features.chunks_exact_mut(target_dim))
        .enumerate()
    {
        let norm = src.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(DataError::ZeroRow(i));
        }
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s / norm;
        }
    }
    Dataset::new(
        features,
        target_dim,
        dataset.labels.clone(),
        dataset.n_classes,
        dataset.split,
    )
}

/// Reads `feature_dim` numeric columns followed by an integer label column.
/// A first line that does not parse as numbers is taken as a header.
pub fn load_feature_csv(
    path: &Path,
    feature_dim: usize,
    n_classes: usize,
    split: Split,
) -> Result<Dataset> {
    let csv_err = |line: u64, message: String| DataError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => csv_err(0, format!("{other:?}")),
        })?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != feature_dim + 1 {
            if i == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
                continue;
            }
            return Err(csv_err(
                line,
                format!(
                    "expected {} features plus a label, found {} columns",
                    feature_dim,
                    record.len()
                ),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().take(feature_dim).map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(csv_err(line, format!("non-numeric feature: {e}"))),
        };
        let label_cell = &record[feature_dim];
        let label: usize = label_cell
            .parse()
            .map_err(|_| csv_err(line, format!("label {label_cell:?} is not a class index")))?;
        if label >= n_classes {
            return Err(csv_err(
                line,
                format!("label {label} outside 0..{n_classes}"),
            ));
        }
        features.extend(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(DataError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Dataset::new(features, feature_dim, labels, n_classes, split)
}

/// Two isotropic unit-variance Gaussian blobs whose means sit `separation`
/// apart, along two random orthogonal directions at equal distance from the
/// origin. Labels alternate so both classes are balanced.
///
/// Orthogonal means (rather than `±μ`) keep the classes distinguishable after
/// amplitude encoding, which cannot tell `ψ` from `−ψ` apart.
pub fn synthesize_binary(
    n_samples: usize,
    feature_dim: usize,
    separation: f64,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if !feature_dim.is_power_of_two() || feature_dim < 2 {
        return Err(DataError::NotPowerOfTwo(feature_dim));
    }
    if !(separation >= 0.0) {
        return Err(DataError::Invalid(format!(
            "class separation must be nonnegative, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut u: Vec<f64> = (0..feature_dim).map(|_| gauss()).collect();
    let mut w: Vec<f64> = (0..feature_dim).map(|_| gauss()).collect();
    normalize(&mut u);
    let proj: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    for (wi, ui) in w.iter_mut().zip(&u) {
        *wi -= proj * ui;
    }
    normalize(&mut w);
    let radius = separation / std::f64::consts::SQRT_2;
    let means = [u, w];

    let mut features = Vec::with_capacity(n_samples * feature_dim);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let label = i % 2;
        for m in &means[label] {
            features.push(radius * m + gauss());
        }
        labels.push(label);
    }
    Dataset::new(features, feature_dim, labels, 2, split)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}
