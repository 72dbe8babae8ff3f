use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Labelled feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f32>, labels: Vec<u32>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset must contain at least one sample".into(),
            ));
        }
        if dim == 0 || num_classes == 0 {
            return Err(Error::Config(
                "dataset dimension and class count must be positive".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::dim("feature count", labels.len() * dim, features.len()));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y as usize >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {y} of sample {i} is outside 0..{num_classes}"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    /// Infers the class count as `max(label) + 1`.
    pub fn from_labels(features: Vec<f32>, labels: Vec<u32>, dim: usize) -> Result<Self> {
        let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        Self::new(features, labels, dim, classes)
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    /// Split into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n == 0 || n >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "split point {n} must leave both parts of {} samples non-empty",
                self.len()
            )));
        }
        let cut = n * self.dim;
        let head = Dataset::new(
            self.features[..cut].to_vec(),
            self.labels[..n].to_vec(),
            self.dim,
            self.num_classes,
        )?;
        let tail = Dataset::new(
            self.features[cut..].to_vec(),
            self.labels[n..].to_vec(),
            self.dim,
            self.num_classes,
        )?;
        Ok((head, tail))
    }

    /// Samples per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }
}

/// Gaussian blobs around `classes` means placed on the sphere of `radius`.
///
/// Samples are interleaved by class (`sample i` has label `i % classes`), so
/// any prefix is close to balanced.
pub fn gen_synthetic(
    rng_seed: u64,
    classes: usize,
    dim: usize,
    per_class: usize,
    radius: f64,
    sigma: f64,
) -> Result<Dataset> {
    if classes < 2 || dim == 0 || per_class == 0 {
        return Err(Error::Config(format!(
            "need classes >= 2, dim >= 1, per_class >= 1 (got {classes}, {dim}, {per_class})"
        )));
    }
    if !(radius.is_finite() && radius > 0.0 && sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config("radius and sigma must be positive and finite".into()));
    }
    let mut rng = seeded(rng_seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm * radius).collect();
            }
        })
        .collect();
    let noise = Normal::new(0.0, sigma).expect("sigma validated above");
    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        features.extend(means[class].iter().map(|&m| (m + noise.sample(&mut rng)) as f32));
        labels.push(class as u32);
    }
    Dataset::new(features, labels, dim, classes)
}
