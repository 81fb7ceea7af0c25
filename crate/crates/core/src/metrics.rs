//! Uniformity and utility metrics.

use core::fmt;

use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{domain, shape, Result};
use crate::math::{argmax, max, pairwise_sum, sqrt};
use crate::model::{probs_unchecked, ModelSpec, ParamVector};
use crate::objective::check_simplex;

/// `max(0, max_j p_j - 1/k)`.
pub fn confidence_distance(p: &[f64]) -> Result<f64> {
    check_simplex(p)?;
    Ok(conf_dist_unchecked(p))
}

pub(crate) fn conf_dist_unchecked(p: &[f64]) -> f64 {
    (max(p) - 1.0 / p.len() as f64).max(0.0)
}

/// Euclidean distance from `p` to the uniform vector.
pub fn l2_uniformity(p: &[f64]) -> Result<f64> {
    check_simplex(p)?;
    Ok(l2_unchecked(p))
}

fn l2_unchecked(p: &[f64]) -> f64 {
    let c = 1.0 / p.len() as f64;
    sqrt(p.iter().map(|&pi| (pi - c) * (pi - c)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Retain,
    Test,
    Forget,
}

impl SplitTag {
    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Retain => "retain",
            SplitTag::Test => "test",
            SplitTag::Forget => "forget",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for SplitTag {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retain" => Ok(SplitTag::Retain),
            "test" => Ok(SplitTag::Test),
            "forget" => Ok(SplitTag::Forget),
            other => Err(domain(alloc::format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub split: SplitTag,
    pub n: usize,
    pub accuracy: f64,
    pub conf_dist_mean: f64,
    pub l2_uniformity_mean: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str = "split,n,accuracy,conf_dist,l2_uniformity";
}

impl fmt::Display for MetricRow {
    /// One CSV line matching [`MetricRow::CSV_HEADER`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{:?},{:?},{:?}",
            self.split, self.n, self.accuracy, self.conf_dist_mean, self.l2_uniformity_mean
        )
    }
}

/// Per-example predictions used by the metric reductions.
pub(crate) fn predictions(
    spec: &ModelSpec,
    w: &[f64],
    ds: &LabeledDataset,
    idx: &[usize],
) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&i| probs_unchecked(spec, w, ds.x(i)))
        .collect()
}

/// Accuracy and mean uniformity metrics over `idx`. Rows are sorted before
/// reduction, so any ordering of `idx` yields the same result.
pub fn evaluate(
    spec: &ModelSpec,
    w: &ParamVector,
    ds: &LabeledDataset,
    idx: &[usize],
    split: SplitTag,
) -> Result<MetricRow> {
    w.check(spec)?;
    shape(spec.input_dim(), ds.dim)?;
    if idx.is_empty() {
        return Err(domain("cannot evaluate an empty index set"));
    }
    if let Some(&i) = idx.iter().find(|&&i| i >= ds.len()) {
        return Err(domain(alloc::format!("index {i} out of range")));
    }
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    let probs = predictions(spec, &w.values, ds, &sorted);
    let correct: Vec<f64> = probs
        .iter()
        .zip(&sorted)
        .map(|(p, &i)| if argmax(p) == ds.labels[i] { 1.0 } else { 0.0 })
        .collect();
    let conf: Vec<f64> = probs.iter().map(|p| conf_dist_unchecked(p)).collect();
    let l2: Vec<f64> = probs.iter().map(|p| l2_unchecked(p)).collect();
    let n = sorted.len() as f64;
    Ok(MetricRow {
        split,
        n: sorted.len(),
        accuracy: pairwise_sum(&correct) / n,
        conf_dist_mean: pairwise_sum(&conf) / n,
        l2_uniformity_mean: pairwise_sum(&l2) / n,
    })
}

/// Accuracy only, on all rows of `ds`.
pub fn accuracy(spec: &ModelSpec, w: &ParamVector, ds: &LabeledDataset) -> Result<f64> {
    Ok(evaluate(spec, w, ds, &ds.all_indices(), SplitTag::Test)?.accuracy)
}
