use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Labelled samples with a fixed feature dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f32>, labels: Vec<usize>, num_features: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset", "must contain at least one sample"));
        }
        if num_features == 0 || features.len() != labels.len() * num_features {
            return Err(Error::Dimension(format!(
                "{} feature values for {} samples of dimension {num_features}",
                features.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes", "must be >= 1"));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {y} outside [0, {num_classes})"),
            ));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Dataset {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, i: usize) -> &[f32] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.num_features, self.num_classes)
    }

    /// First `n` samples (all of them when `n` is 0 or too large).
    pub fn head(&self, n: usize) -> Dataset {
        if n == 0 || n >= self.len() {
            return self.clone();
        }
        Dataset {
            features: self.features[..n * self.num_features].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_features: self.num_features,
            num_classes: self.num_classes,
        }
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::invalid(
                "split",
                format!("cannot split {} samples at {n}", self.len()),
            ));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Option<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn idx_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_owned(),
        reason: reason.into(),
    }
}

/// Reads an MNIST image/label pair in IDX format; pixels are scaled to [0, 1].
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;

    let header =
        |bytes: &[u8], path: &Path, offset| read_u32(bytes, offset).ok_or_else(|| idx_error(path, "truncated header"));

    let magic = header(&images, images_path, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(idx_error(
            images_path,
            format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = header(&images, images_path, 4)? as usize;
    let rows = header(&images, images_path, 8)? as usize;
    let cols = header(&images, images_path, 12)? as usize;
    let pixels = &images[16..];
    let dim = rows * cols;
    if pixels.len() != count * dim {
        return Err(idx_error(
            images_path,
            format!(
                "expected {} pixel bytes for {count}x{rows}x{cols}, found {}",
                count * dim,
                pixels.len()
            ),
        ));
    }

    let magic = header(&labels, labels_path, 0)?;
    if magic != LABELS_MAGIC {
        return Err(idx_error(
            labels_path,
            format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = header(&labels, labels_path, 4)? as usize;
    let label_bytes = &labels[8..];
    if label_bytes.len() != label_count {
        return Err(idx_error(
            labels_path,
            format!("header announces {label_count} labels, found {}", label_bytes.len()),
        ));
    }
    if label_count != count {
        return Err(idx_error(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }
    if let Some(bad) = label_bytes.iter().find(|&&y| y > 9) {
        return Err(idx_error(labels_path, format!("label {bad} outside 0..=9")));
    }

    let features = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let labels = label_bytes.iter().map(|&y| y as usize).collect();
    Dataset::new(features, labels, dim, 10)
}

/// Gaussian class clusters: class means are drawn with standard deviation
/// `separation` per feature, samples add unit-variance noise. Labels cycle
/// through the classes so every class is equally represented.
pub fn synth_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    num_samples: usize,
    num_features: usize,
    num_classes: usize,
    separation: f64,
) -> Result<Dataset> {
    if num_classes == 0 || num_features == 0 {
        return Err(Error::invalid("synthetic dataset", "needs >= 1 feature and >= 1 class"));
    }
    let means: Vec<f64> = (0..num_classes * num_features)
        .map(|_| separation * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let mut features = Vec::with_capacity(num_samples * num_features);
    let mut labels = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let y = i % num_classes;
        let mean = &means[y * num_features..(y + 1) * num_features];
        features.extend(mean.iter().map(|m| {
            let noise: f64 = StandardNormal.sample(rng);
            (m + noise) as f32
        }));
        labels.push(y);
    }
    Dataset::new(features, labels, num_features, num_classes)
}

/// Random equal split into `num_clients` disjoint shares whose sizes differ by
/// at most one.
pub fn partition_iid<R: Rng + ?Sized>(dataset: &Dataset, num_clients: usize, rng: &mut R) -> Result<Vec<Dataset>> {
    if num_clients == 0 || num_clients > dataset.len() {
        return Err(Error::invalid(
            "num_clients",
            format!("cannot split {} samples among {num_clients} clients", dataset.len()),
        ));
    }
    if num_clients == 1 {
        return Ok(vec![dataset.clone()]);
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let base = dataset.len() / num_clients;
    let extra = dataset.len() % num_clients;
    let mut shares = Vec::with_capacity(num_clients);
    let mut start = 0;
    for i in 0..num_clients {
        let size = base + usize::from(i < extra);
        shares.push(dataset.subset(&order[start..start + size])?);
        start += size;
    }
    Ok(shares)
}
