//! Uniformity losses and the θ-scalarised Pareto objective
//! `θ Σ_f ℓ_K + (1-θ) Σ_r ℓ_A + (λ/2)‖w‖²`, or its per-set mean form
//! `θ mean_f ℓ_K + (1-θ) mean_r ℓ_A + (λ/2)‖w‖²`.

use alloc::format;
use alloc::vec::Vec;

use crate::data::Split;
use crate::error::{domain, Error, Result};
use crate::loss::LossKind;
use crate::math::{ln, pairwise_sum, sqrt};
use crate::model::{accumulate_grad, ModelSpec, ParamVector, Term};

const SIMPLEX_TOL: f64 = 1e-9;

pub(crate) fn check_simplex(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(domain("probability vector needs at least two entries"));
    }
    let mut s = 0.0;
    for &pi in p {
        if !(pi >= -SIMPLEX_TOL) || !pi.is_finite() {
            return Err(domain(format!("entry {pi} is not a probability")));
        }
        s += pi;
    }
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(domain(format!("probabilities sum to {s}")));
    }
    Ok(())
}

/// `Σ p_i ln(p_i k)`, the KL divergence from the uniform distribution.
pub fn kl_to_uniform(p: &[f64]) -> Result<f64> {
    check_simplex(p)?;
    let k = p.len() as f64;
    let mut s = 0.0;
    for &pi in p {
        if pi > 0.0 {
            s += pi * ln(pi * k);
        }
    }
    Ok(s.max(0.0))
}

/// `Σ (p_i - 1/k)²`.
pub fn square_to_uniform(p: &[f64]) -> Result<f64> {
    check_simplex(p)?;
    let c = 1.0 / p.len() as f64;
    Ok(p.iter().map(|&pi| (pi - c) * (pi - c)).sum())
}

/// How per-example losses are combined within each set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Sum,
    /// Each set's losses are averaged, as in minibatch training where the
    /// two batch means are mixed with weights θ and 1-θ.
    Mean,
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        }
    }
}

impl core::fmt::Display for Reduction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::Config(format!(
                "unknown reduction `{s}` (expected sum or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoConfig {
    pub theta: f64,
    pub lambda: f64,
    /// Norm cap `C`. Optional for plain finetuning, required when certifying.
    pub c_bound: Option<f64>,
    pub forget_loss: LossKind,
    pub retain_loss: LossKind,
    pub reduction: Reduction,
}

impl ParetoConfig {
    pub fn new(
        theta: f64,
        lambda: f64,
        c_bound: Option<f64>,
        forget_loss: LossKind,
    ) -> Result<Self> {
        let cfg = ParetoConfig {
            theta,
            lambda,
            c_bound,
            forget_loss,
            retain_loss: LossKind::CrossEntropy,
            reduction: Reduction::Sum,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks `0 < θ < 1`, `λ ≥ 0`, `C > 0` and the loss roles.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!(
                "theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        self.validate_edges()
    }

    /// As `validate` but admits the endpoints `θ = 0` and `θ = 1`, used for
    /// the retain-only reference problem and bound experiments.
    pub fn validate_edges(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if let Some(c) = self.c_bound {
            if !(c > 0.0) {
                return Err(Error::Config(format!("C must be positive, got {c}")));
            }
        }
        if self.forget_loss == LossKind::CrossEntropy {
            return Err(Error::Config(
                "forget loss must be a uniformity loss".into(),
            ));
        }
        if self.retain_loss != LossKind::CrossEntropy {
            return Err(Error::Config("retain loss must be cross entropy".into()));
        }
        Ok(())
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    /// Per-example weights `(forget, retain)` for sets of the given sizes.
    pub fn weights(&self, forget_count: usize, retain_count: usize) -> (f64, f64) {
        match self.reduction {
            Reduction::Sum => (self.theta, 1.0 - self.theta),
            Reduction::Mean => (
                self.theta / forget_count as f64,
                (1.0 - self.theta) / retain_count as f64,
            ),
        }
    }

    /// The equivalent summed objective and its scale `s`: this objective
    /// equals `s` times the returned one, so both share minimisers, Newton
    /// steps and certificates. Sum configurations map to themselves with
    /// `s = 1`.
    pub fn summed(&self, forget_count: usize, retain_count: usize) -> Result<(ParetoConfig, f64)> {
        if self.reduction == Reduction::Sum {
            return Ok((*self, 1.0));
        }
        if forget_count == 0 || retain_count == 0 {
            return Err(domain(
                "mean reduction needs nonempty forget and retain sets",
            ));
        }
        let (wf, wr) = self.weights(forget_count, retain_count);
        let s = wf + wr;
        let cfg = ParetoConfig {
            theta: wf / s,
            lambda: self.lambda / s,
            reduction: Reduction::Sum,
            ..*self
        };
        Ok((cfg, s))
    }
}

fn check_split(spec: &ModelSpec, split: &Split) -> Result<()> {
    if split.forget_idx.is_empty() {
        return Err(domain("forget set is empty"));
    }
    if split.retain_idx.is_empty() {
        return Err(domain("retain set is empty"));
    }
    crate::error::shape(spec.input_dim(), split.dataset.dim)?;
    if split.dataset.classes > spec.classes() {
        return Err(domain("dataset has more classes than the model"));
    }
    Ok(())
}

/// Summed component losses `(L_K over D_f, L_A over D_r)`.
pub fn component_losses(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
) -> Result<(f64, f64)> {
    w.check(spec)?;
    check_split(spec, split)?;
    let ds = &split.dataset;
    let per = |idx: &[usize], loss: LossKind| -> Vec<f64> {
        idx.iter()
            .map(|&i| {
                let z = crate::model::logits_unchecked(spec, &w.values, ds.x(i));
                loss.value(&z, ds.labels[i])
            })
            .collect()
    };
    let lk = pairwise_sum(&per(&split.forget_idx, cfg.forget_loss));
    let la = pairwise_sum(&per(&split.retain_idx, cfg.retain_loss));
    Ok((lk, la))
}

pub fn pareto_value(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
) -> Result<f64> {
    cfg.validate_edges()?;
    let (lk, la) = component_losses(spec, w, split, cfg)?;
    let (wf, wr) = cfg.weights(split.forget_idx.len(), split.retain_idx.len());
    let reg = 0.5 * cfg.lambda * crate::math::dot(&w.values, &w.values);
    Ok(wf * lk + wr * la + reg)
}

/// Exact gradient of [`pareto_value`].
pub fn pareto_gradient(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
) -> Result<ParamVector> {
    cfg.validate_edges()?;
    w.check(spec)?;
    check_split(spec, split)?;
    let mut g = ParamVector::zeros(*spec);
    let ds = &split.dataset;
    let (wf, wr) = cfg.weights(split.forget_idx.len(), split.retain_idx.len());
    if wf > 0.0 {
        for &i in &split.forget_idx {
            accumulate_grad(
                spec,
                &w.values,
                ds.x(i),
                ds.labels[i],
                cfg.forget_loss,
                wf,
                &mut g.values,
            );
        }
    }
    if wr > 0.0 {
        for &i in &split.retain_idx {
            accumulate_grad(
                spec,
                &w.values,
                ds.x(i),
                ds.labels[i],
                cfg.retain_loss,
                wr,
                &mut g.values,
            );
        }
    }
    crate::math::axpy(cfg.lambda, &w.values, &mut g.values);
    Ok(g)
}

/// Curvature terms of the objective without the regulariser.
pub fn pareto_terms<'a>(split: &'a Split, cfg: &ParetoConfig) -> Vec<Term<'a>> {
    let ds = &split.dataset;
    let (wf, wr) = cfg.weights(split.forget_idx.len(), split.retain_idx.len());
    let mut terms = Vec::with_capacity(split.forget_idx.len() + split.retain_idx.len());
    for &i in &split.forget_idx {
        terms.push(Term {
            example: ds.example(i),
            loss: cfg.forget_loss,
            weight: wf,
        });
    }
    for &i in &split.retain_idx {
        terms.push(Term {
            example: ds.example(i),
            loss: cfg.retain_loss,
            weight: wr,
        });
    }
    terms
}

/// Euclidean projection onto the ball of radius `c`.
pub fn project_ball(w: &ParamVector, c: f64) -> ParamVector {
    let mut out = w.clone();
    project_ball_in_place(&mut out.values, c);
    out
}

pub(crate) fn project_ball_in_place(w: &mut [f64], c: f64) {
    let n = sqrt(crate::math::dot(w, w));
    if n > c {
        let s = c / n;
        for v in w.iter_mut() {
            *v *= s;
        }
    }
}
