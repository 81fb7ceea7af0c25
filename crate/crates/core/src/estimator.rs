//! Stochastic Neumann-series estimate of `(H + λI)^{-1} g`.
//!
//! Each replica runs `P_t = g + (I - H_t / J) P_{t-1}` from `P_0 = g`, where
//! `H_t` is an unbiased single-sample estimate of `H + λI`. The replicas are
//! averaged and divided by `J`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Split;
use crate::error::{domain, shape, Result};
use crate::model::{accumulate_hvp, ModelSpec, ParamVector};
use crate::objective::ParetoConfig;
use crate::rng::substream;

/// Source of single-sample curvature `H_t v`.
pub trait CurvatureSampler {
    fn dim(&self) -> usize;
    /// Draws one `H_t` and writes `H_t v` into `out`.
    fn sample_hvp(&self, rng: &mut crate::rng::Rng, v: &[f64], out: &mut [f64]);
}

/// Samples a forget example with probability θ and uses
/// `(|D_f| w_f / θ) ∇²ℓ_K + λI/(2θ)`, otherwise a retain example with
/// `(|D_r| w_r / (1-θ)) ∇²ℓ_A + λI/(2(1-θ))`, where `w_f, w_r` are the
/// per-example weights of `cfg`. The expectation is exactly the Hessian of
/// the configured objective. The example Hessian is scaled by the set size
/// under the sum reduction and left unscaled under the mean reduction.
pub struct MixtureSampler<'a> {
    pub spec: ModelSpec,
    pub w: &'a [f64],
    pub split: &'a Split,
    pub cfg: ParetoConfig,
    /// Overrides `split.forget_idx` and `split.retain_idx` when set.
    pub sets: Option<(&'a [usize], &'a [usize])>,
}

impl MixtureSampler<'_> {
    fn sets(&self) -> (&[usize], &[usize]) {
        self.sets
            .unwrap_or((&self.split.forget_idx, &self.split.retain_idx))
    }
}

impl CurvatureSampler for MixtureSampler<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn sample_hvp(&self, rng: &mut crate::rng::Rng, v: &[f64], out: &mut [f64]) {
        let (forget, retain) = self.sets();
        let theta = self.cfg.theta;
        let (wf, wr) = self.cfg.weights(forget.len(), retain.len());
        let ds = &self.split.dataset;
        out.iter_mut().for_each(|o| *o = 0.0);
        let u: f64 = rng.gen();
        let (i, loss, scale, shift) = if u < theta {
            let i = forget[rng.gen_range(0..forget.len())];
            (
                i,
                self.cfg.forget_loss,
                forget.len() as f64 * wf / theta,
                self.cfg.lambda / (2.0 * theta),
            )
        } else {
            let i = retain[rng.gen_range(0..retain.len())];
            (
                i,
                self.cfg.retain_loss,
                retain.len() as f64 * wr / (1.0 - theta),
                self.cfg.lambda / (2.0 * (1.0 - theta)),
            )
        };
        accumulate_hvp(
            &self.spec,
            self.w,
            ds.x(i),
            ds.labels[i],
            loss,
            scale,
            v,
            out,
        );
        crate::math::axpy(shift, v, out);
    }
}

/// Dense per-sample matrices: with probability θ one of `forget`, otherwise
/// one of `retain`, uniformly within the group. Useful for quadratic
/// objectives whose example Hessians are known in closed form.
pub struct DenseMixture {
    pub dim: usize,
    pub theta: f64,
    /// Row-major `dim x dim` matrices.
    pub forget: Vec<Vec<f64>>,
    pub retain: Vec<Vec<f64>>,
}

impl DenseMixture {
    /// `E[H_t]` as a row-major matrix.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.dim * self.dim;
        let mut m = vec![0.0; n];
        for (group, p) in [(&self.forget, self.theta), (&self.retain, 1.0 - self.theta)] {
            for a in group.iter() {
                crate::math::axpy(p / group.len() as f64, a, &mut m);
            }
        }
        m
    }
}

impl CurvatureSampler for DenseMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_hvp(&self, rng: &mut crate::rng::Rng, v: &[f64], out: &mut [f64]) {
        let u: f64 = rng.gen();
        let group = if u < self.theta {
            &self.forget
        } else {
            &self.retain
        };
        let a = &group[rng.gen_range(0..group.len())];
        for (r, o) in out.iter_mut().enumerate() {
            *o = crate::math::dot(&a[r * self.dim..(r + 1) * self.dim], v);
        }
    }
}

/// One replica of the recursion, returning `P_n` (not yet divided by `J`).
pub fn neumann_replica<S: CurvatureSampler + ?Sized>(
    sampler: &S,
    g: &[f64],
    j_bound: f64,
    n: u64,
    rng: &mut crate::rng::Rng,
) -> Vec<f64> {
    let mut p = g.to_vec();
    let mut hp = vec![0.0; g.len()];
    for _ in 0..n {
        sampler.sample_hvp(rng, &p, &mut hp);
        for i in 0..p.len() {
            p[i] = g[i] + p[i] - hp[i] / j_bound;
        }
    }
    p
}

/// Mean of `b` replicas divided by `J`. Replica `r` draws from stream
/// `(seed, request, r)`.
pub fn neumann_inverse<S: CurvatureSampler + ?Sized>(
    sampler: &S,
    g: &[f64],
    j_bound: f64,
    n: u64,
    b: usize,
    seed: u64,
    request: u64,
) -> Result<Vec<f64>> {
    shape(sampler.dim(), g.len())?;
    if !(j_bound > 0.0) || !j_bound.is_finite() {
        return Err(domain("J must be positive and finite"));
    }
    if b == 0 {
        return Err(domain("need at least one replica"));
    }
    let mut acc = vec![0.0; g.len()];
    for r in 0..b {
        let mut rng = substream(seed, request, r as u64);
        let p = neumann_replica(sampler, g, j_bound, n, &mut rng);
        crate::math::axpy(1.0, &p, &mut acc);
    }
    let s = 1.0 / (b as f64 * j_bound);
    acc.iter_mut().for_each(|v| *v *= s);
    Ok(acc)
}

/// Estimate of `(H + λI)^{-1} g` for the Pareto objective of `cfg` at
/// `w_star`. For a gradient of the same objective the result is the Newton
/// step, which does not depend on the reduction. `J` must bound the sampled
/// curvature of the configured form, which under the mean reduction is
/// smaller than under the sum reduction by about the set sizes.
#[allow(clippy::too_many_arguments)]
pub fn estimate_inverse_hvp(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
    j_bound: f64,
    n: u64,
    b: usize,
    seed: u64,
    g: &ParamVector,
) -> Result<ParamVector> {
    cfg.validate()?;
    w_star.check(spec)?;
    g.check(spec)?;
    if split.forget_idx.is_empty() || split.retain_idx.is_empty() {
        return Err(domain("estimator needs nonempty forget and retain sets"));
    }
    let sampler = MixtureSampler {
        spec: *spec,
        w: &w_star.values,
        split,
        cfg: *cfg,
        sets: None,
    };
    let v = neumann_inverse(&sampler, &g.values, j_bound, n, b, seed, 0)?;
    ParamVector::new(*spec, v)
}
