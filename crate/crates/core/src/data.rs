//! Datasets and forget/retain splits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, shape, Error, Result};
use crate::model::Example;

/// Row-major feature matrix with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub dim: usize,
    pub classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(domain("feature dimension must be positive"));
        }
        shape(labels.len() * dim, features.len())?;
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(domain(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("features"));
        }
        Ok(LabeledDataset {
            name: name.into(),
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            x: self.x(i),
            y: self.labels[i],
        }
    }

    /// New dataset holding the given rows, in order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            name: self.name.clone(),
            dim: self.dim,
            classes: self.classes,
            features,
            labels,
        }
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }
}

/// A training set partitioned into a forget set and a retain set.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub dataset: LabeledDataset,
    pub forget_idx: Vec<usize>,
    pub retain_idx: Vec<usize>,
}

impl Split {
    pub fn new(
        dataset: LabeledDataset,
        forget_idx: Vec<usize>,
        retain_idx: Vec<usize>,
    ) -> Result<Self> {
        let n = dataset.len();
        let mut seen = vec![0u8; n];
        for &i in forget_idx.iter().chain(&retain_idx) {
            if i >= n {
                return Err(domain(format!("index {i} out of range for {n} examples")));
            }
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(domain(
                "forget and retain sets must partition the training set",
            ));
        }
        if forget_idx.is_empty() {
            return Err(domain("forget set is empty"));
        }
        Ok(Split {
            dataset,
            forget_idx,
            retain_idx,
        })
    }

    /// Split whose forget set is `forget`, with the complement retained.
    pub fn from_forget(dataset: LabeledDataset, mut forget: Vec<usize>) -> Result<Self> {
        forget.sort_unstable();
        let n = dataset.len();
        let mut mark = vec![false; n];
        for &i in &forget {
            if i >= n {
                return Err(domain(format!("index {i} out of range for {n} examples")));
            }
            if mark[i] {
                return Err(domain(format!("index {i} listed twice in forget set")));
            }
            mark[i] = true;
        }
        let retain = (0..n).filter(|&i| !mark[i]).collect();
        Split::new(dataset, forget, retain)
    }
}

/// Uniform sample of `count` distinct forget indices; the rest is retained.
pub fn select_forget(dataset: LabeledDataset, count: usize, seed: u64) -> Result<Split> {
    let n = dataset.len();
    if count > n {
        return Err(domain(format!(
            "forget count {count} exceeds dataset size {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forget = rand::seq::index::sample(&mut rng, n, count).into_vec();
    Split::from_forget(dataset, forget)
}

/// Shuffled train/test partition; `train_fraction` of rows go to train.
pub fn train_test_split(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(domain("train fraction must lie in (0, 1)"));
    }
    let mut idx = dataset.all_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = libm::round(train_fraction * dataset.len() as f64) as usize;
    let (tr, te) = idx.split_at(n_train);
    Ok((dataset.subset(tr), dataset.subset(te)))
}

/// Isotropic Gaussian clusters, one per class, with means spaced on a
/// scaled simplex-like pattern so distinct classes never share a centre.
pub fn make_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes == 0 || per_class == 0 || dim == 0 {
        return Err(domain("blob counts must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = vec![0.0; classes * dim];
    for m in means.iter_mut() {
        *m = rng.gen_range(-5.0..5.0);
    }
    let mut features = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            for j in 0..dim {
                let e: f64 = rng.sample(StandardNormal);
                features.push(means[c * dim + j] + spread * e);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new("blobs", dim, classes.max(2), features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_and_determinism() {
        let a = make_blobs(3, 50, 2, 0.5, 7).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, make_blobs(3, 50, 2, 0.5, 7).unwrap());
    }

    #[test]
    fn blobs_zero_spread() {
        let a = make_blobs(2, 10, 3, 0.0, 1).unwrap();
        for i in 1..10 {
            assert_eq!(a.x(i), a.x(0));
        }
    }

    #[test]
    fn select_forget_partitions() {
        let ds = make_blobs(2, 20, 2, 1.0, 3).unwrap();
        let s = select_forget(ds.clone(), 5, 11).unwrap();
        assert_eq!(s.forget_idx.len(), 5);
        assert_eq!(s.retain_idx.len(), 35);
        assert_eq!(s, select_forget(ds.clone(), 5, 11).unwrap());
        assert!(select_forget(ds.clone(), 41, 0).is_err());
        assert!(select_forget(ds.clone(), 1, 0).is_ok());
        // everything forgotten is a valid split; the objectives reject it later
        assert!(select_forget(ds, 40, 0).unwrap().retain_idx.is_empty());
    }

    #[test]
    fn split_rejects_overlap() {
        let ds = make_blobs(2, 2, 1, 1.0, 0).unwrap();
        assert!(Split::new(ds.clone(), vec![0], vec![0, 1, 2, 3]).is_err());
        assert!(Split::new(ds.clone(), vec![], vec![0, 1, 2, 3]).is_err());
        assert!(Split::new(ds, vec![0], vec![1, 2, 3]).is_ok());
    }

    #[test]
    fn train_test_sizes() {
        let ds = make_blobs(2, 50, 2, 1.0, 0).unwrap();
        let (tr, te) = train_test_split(&ds, 0.7, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (70, 30));
    }
}
