//! Reference methods that retrain instead of finetuning.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{LabeledDataset, Split};
use crate::error::{domain, Result};
use crate::finetune::{pretrain, OptimizerConfig};
use crate::math::{norm2, powf, sqrt};
use crate::model::{ModelSpec, ParamVector};
use crate::rng::substream;

/// Training from scratch on the retain set only.
pub fn retrain_baseline(
    spec: &ModelSpec,
    split: &Split,
    opt: &OptimizerConfig,
) -> Result<ParamVector> {
    if split.retain_idx.is_empty() {
        return Err(domain("retain set is empty"));
    }
    pretrain(spec, &split.dataset.subset(&split.retain_idx), opt, None)
}

/// Uniform sample from the ℓ2 ball of radius `r` around the origin:
/// Gaussian direction, radius `r u^(1/d)`.
fn ball_sample(dim: usize, r: f64, rng: &mut crate::rng::Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&v);
        if n > 0.0 {
            let u: f64 = rng.gen();
            let s = r * powf(u, 1.0 / dim as f64) / n;
            v.iter_mut().for_each(|x| *x *= s);
            return v;
        }
    }
}

/// Retain set augmented with `k_samples` randomly labelled points drawn
/// uniformly from the ℓ2 ball of radius `ball_radius` around every forget
/// example. Forget examples themselves are left out.
pub fn synthetic_augmented_set(
    split: &Split,
    k_samples: usize,
    ball_radius: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if k_samples == 0 {
        return Err(domain(
            "synthetic baseline needs at least one sample per forget example",
        ));
    }
    if !(ball_radius >= 0.0) {
        return Err(domain("ball radius must be nonnegative"));
    }
    let ds = &split.dataset;
    let mut out = ds.subset(&split.retain_idx);
    out.features
        .reserve(split.forget_idx.len() * k_samples * ds.dim);
    for (j, &i) in split.forget_idx.iter().enumerate() {
        let mut rng = substream(seed, 0x5197, j as u64);
        let x = ds.x(i);
        for _ in 0..k_samples {
            let off = ball_sample(ds.dim, ball_radius, &mut rng);
            out.features.extend(x.iter().zip(&off).map(|(a, b)| a + b));
            out.labels.push(rng.gen_range(0..ds.classes));
        }
    }
    Ok(out)
}

/// Retrains on [`synthetic_augmented_set`].
pub fn synthetic_baseline(
    spec: &ModelSpec,
    split: &Split,
    k_samples: usize,
    ball_radius: f64,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<ParamVector> {
    let aug = synthetic_augmented_set(split, k_samples, ball_radius, seed)?;
    pretrain(spec, &aug, opt, None)
}

/// The training set: every example perturbed by `N(0, variance)` noise with
/// its label kept, plus every clean example with a uniformly random label.
pub fn gaussian_uniform_set(
    dataset: &LabeledDataset,
    variance: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(variance > 0.0) {
        return Err(domain("variance must be positive"));
    }
    let sd = sqrt(variance);
    let n = dataset.len();
    let mut features = Vec::with_capacity(2 * dataset.features.len());
    let mut labels = Vec::with_capacity(2 * n);
    let mut noise = substream(seed, 0x6A0, 0);
    for i in 0..n {
        features.extend(dataset.x(i).iter().map(|&v| {
            let e: f64 = StandardNormal.sample(&mut noise);
            v + sd * e
        }));
        labels.push(dataset.labels[i]);
    }
    let mut lab = substream(seed, 0x6A0, 1);
    features.extend_from_slice(&dataset.features);
    labels.extend((0..n).map(|_| lab.gen_range(0..dataset.classes)));
    LabeledDataset::new(
        dataset.name.clone(),
        dataset.dim,
        dataset.classes,
        features,
        labels,
    )
}

/// Retrains on [`gaussian_uniform_set`].
pub fn gaussian_uniform_baseline(
    spec: &ModelSpec,
    dataset: &LabeledDataset,
    variance: f64,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<ParamVector> {
    let set = gaussian_uniform_set(dataset, variance, seed)?;
    pretrain(spec, &set, opt, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, select_forget};

    #[test]
    fn augmented_size() {
        let split = select_forget(make_blobs(3, 20, 4, 1.0, 0).unwrap(), 6, 1).unwrap();
        let aug = synthetic_augmented_set(&split, 5, 0.1, 2).unwrap();
        assert_eq!(aug.len(), 54 + 6 * 5);
        assert!(synthetic_augmented_set(&split, 0, 0.1, 2).is_err());
    }

    #[test]
    fn ball_samples_inside_radius() {
        let mut rng = crate::rng::stream(4, 0);
        for _ in 0..200 {
            assert!(norm2(&ball_sample(7, 0.5, &mut rng)) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn gaussian_uniform_doubles() {
        let ds = make_blobs(2, 10, 3, 1.0, 0).unwrap();
        let set = gaussian_uniform_set(&ds, 0.1, 3).unwrap();
        assert_eq!(set.len(), 40);
        assert_eq!(set, gaussian_uniform_set(&ds, 0.1, 3).unwrap());
        assert_eq!(&set.features[20 * 3..], &ds.features[..]);
    }
}
