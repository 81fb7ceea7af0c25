//! Certified Pareto learners: a Newton step towards the Pareto optimum,
//! released through the Gaussian mechanism with noise calibrated to a bound
//! `Δ` on the distance to the exact minimiser.
//!
//! For `(ε, δ)` with `0 < ε < 1`,
//! `σ = (Δ / ε) sqrt(2 ln(1.25 / δ))`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use faer::prelude::SpSolver;
use faer::Side;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Split;
use crate::error::{domain, Error, Result};
use crate::estimator::{neumann_inverse, MixtureSampler};
use crate::math::{ln, norm2, sqrt};
use crate::model::{explicit_hessian, ModelSpec, ParamVector};
use crate::objective::{pareto_gradient, pareto_terms, ParetoConfig, Reduction};
use crate::rng::{stream, Rng};

/// Lipschitz constants of the summed losses: `p_*` bound the gradient
/// Lipschitz constants, `f_*` the Hessian Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    pub p_k: f64,
    pub p_a: f64,
    pub f_k: f64,
    pub f_a: f64,
}

impl LipschitzConstants {
    pub fn new(p_k: f64, p_a: f64, f_k: f64, f_a: f64) -> Result<Self> {
        let c = LipschitzConstants { p_k, p_a, f_k, f_a };
        c.validate()?;
        Ok(c)
    }

    pub fn ones() -> Self {
        LipschitzConstants {
            p_k: 1.0,
            p_a: 1.0,
            f_k: 1.0,
            f_a: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_k", self.p_k),
            ("p_a", self.p_a),
            ("f_k", self.f_k),
            ("f_a", self.f_a),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "Lipschitz constant {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `θ p_k + (1-θ) p_a`.
    pub fn p(&self, theta: f64) -> f64 {
        theta * self.p_k + (1.0 - theta) * self.p_a
    }

    /// `θ f_k + (1-θ) f_a`.
    pub fn f(&self, theta: f64) -> f64 {
        theta * self.f_k + (1.0 - theta) * self.f_a
    }

    /// `max{(θ p_k + λ)/|D_f|, ((1-θ) p_a + λ)/|D_r|}`.
    pub fn b(&self, theta: f64, lambda: f64, forget_count: usize, retain_count: usize) -> f64 {
        let a = (theta * self.p_k + lambda) / forget_count as f64;
        let r = ((1.0 - theta) * self.p_a + lambda) / retain_count as f64;
        a.max(r)
    }

    /// Data-dependent upper bounds for logistic regression.
    ///
    /// With bias-augmented inputs `x̃`, the Hessian of a summed loss over a
    /// set `S` is `Σ A_i ⊗ x̃_i x̃_iᵀ` where `A_i` is the logit Hessian, so
    /// `‖H‖ ≤ s₂ λ_max(Σ x̃ x̃ᵀ)` and the Hessian Lipschitz constant is at most
    /// `s₃ Σ ‖x̃‖³`, where `s₂`, `s₃` bound the second and third directional
    /// logit derivatives along unit directions. Cross entropy has
    /// `s₂ = 1/2`, `s₃ = 1/√2`; the square-to-uniform loss has `s₂ = 8`,
    /// `s₃ = 29`. The KL loss has no usable global bound and is rejected.
    pub fn logreg_bounds(
        spec: &ModelSpec,
        split: &Split,
        forget_loss: crate::loss::LossKind,
    ) -> Result<Self> {
        if let ModelSpec::Mlp { .. } = spec {
            return Err(Error::UnsupportedArchitecture("mlp"));
        }
        let (s2k, s3k) = match forget_loss {
            crate::loss::LossKind::SquareToUniform => (8.0, 29.0),
            crate::loss::LossKind::CrossEntropy => (0.5, core::f64::consts::FRAC_1_SQRT_2),
            crate::loss::LossKind::KlToUniform => {
                return Err(Error::Config(
                    "no global Lipschitz bound for the KL loss".into(),
                ))
            }
        };
        let (s2a, s3a) = (0.5, core::f64::consts::FRAC_1_SQRT_2);
        let (gk, ck) = gram_bounds(split, &split.forget_idx);
        let (ga, ca) = gram_bounds(split, &split.retain_idx);
        LipschitzConstants::new(s2k * gk, s2a * ga, s3k * ck, s3a * ca)
    }

    /// Constants of the per-set means when `self` holds those of the sums.
    pub fn for_reduction(
        self,
        reduction: Reduction,
        forget_count: usize,
        retain_count: usize,
    ) -> Self {
        match reduction {
            Reduction::Sum => self,
            Reduction::Mean => {
                let (nf, nr) = (forget_count as f64, retain_count as f64);
                LipschitzConstants {
                    p_k: self.p_k / nf,
                    p_a: self.p_a / nr,
                    f_k: self.f_k / nf,
                    f_a: self.f_a / nr,
                }
            }
        }
    }
}

/// `(λ_max(Σ x̃ x̃ᵀ), Σ ‖x̃‖³)` over `idx`.
fn gram_bounds(split: &Split, idx: &[usize]) -> (f64, f64) {
    let ds = &split.dataset;
    let d = ds.dim + 1;
    let xa =
        faer::Mat::<f64>::from_fn(
            idx.len(),
            d,
            |r, j| if j < ds.dim { ds.x(idx[r])[j] } else { 1.0 },
        );
    let gram = xa.transpose() * &xa;
    let ev = gram.selfadjoint_eigenvalues(Side::Lower);
    let top = ev.iter().copied().fold(0.0, f64::max);
    let cubes: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let x = ds.x(i);
            let n2 = crate::math::dot(x, x) + 1.0;
            n2 * sqrt(n2)
        })
        .collect();
    (top, crate::math::pairwise_sum(&cubes))
}

/// Privacy budget. With `sigma_override` the noise scale is taken as given
/// and `ε` is only implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma_override: Option<f64>,
}

impl Budget {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Budget {
            epsilon,
            delta,
            sigma_override: None,
        }
    }

    pub fn with_sigma(sigma: f64) -> Self {
        Budget {
            epsilon: f64::NAN,
            delta: f64::NAN,
            sigma_override: Some(sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CertMethod {
    ExactHessian,
    Estimator {
        n: u64,
        b: usize,
        j_bound: f64,
        rho: f64,
    },
    Online {
        k: usize,
        n: u64,
        b: usize,
        j_bound: f64,
        rho: f64,
    },
}

impl CertMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CertMethod::ExactHessian => "exact_hessian",
            CertMethod::Estimator { .. } => "estimator",
            CertMethod::Online { .. } => "online",
        }
    }
}

/// Record of a certified release.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub epsilon: f64,
    pub delta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub c_bound: f64,
    pub delta_bound: f64,
    pub sigma: f64,
    pub sigma_override: bool,
    pub lambda_min: f64,
    pub method: CertMethod,
    pub seed: u64,
    /// Gradient bound `G` used by the estimator paths.
    pub g_bound: Option<f64>,
    pub zeta_min: Option<f64>,
}

impl Certificate {
    /// Flat key/value pairs sorted by key.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut v: Vec<(&'static str, String)> = alloc::vec![
            ("c_bound", format!("{:?}", self.c_bound)),
            ("delta", format!("{:?}", self.delta)),
            ("delta_bound", format!("{:?}", self.delta_bound)),
            ("epsilon", format!("{:?}", self.epsilon)),
            ("lambda", format!("{:?}", self.lambda)),
            ("lambda_min", format!("{:?}", self.lambda_min)),
            ("method", String::from(self.method.name())),
            ("seed", format!("{}", self.seed)),
            ("sigma", format!("{:?}", self.sigma)),
            ("sigma_override", format!("{}", self.sigma_override)),
            ("theta", format!("{:?}", self.theta)),
        ];
        match self.method {
            CertMethod::ExactHessian => {}
            CertMethod::Estimator { n, b, j_bound, rho }
            | CertMethod::Online {
                n, b, j_bound, rho, ..
            } => {
                v.push(("n", format!("{n}")));
                v.push(("b", format!("{b}")));
                v.push(("j_bound", format!("{j_bound:?}")));
                v.push(("rho", format!("{rho:?}")));
            }
        }
        if let CertMethod::Online { k, .. } = self.method {
            v.push(("k", format!("{k}")));
        }
        if let Some(g) = self.g_bound {
            v.push(("g_bound", format!("{g:?}")));
        }
        if let Some(z) = self.zeta_min {
            v.push(("zeta_min", format!("{z:?}")));
        }
        v.sort_by_key(|(k, _)| *k);
        v
    }

    /// Whether `σ` is at least the Gaussian-mechanism requirement for the
    /// recorded `(Δ, ε, δ)` and online request count. Overridden noise scales
    /// carry no such guarantee and always fail this check.
    pub fn verify(&self) -> bool {
        if self.sigma_override {
            return false;
        }
        let k = match self.method {
            CertMethod::Online { k, .. } => k as f64,
            _ => 1.0,
        };
        match sigma_for(self.delta_bound, self.epsilon, self.delta) {
            Ok(s) => self.sigma >= s / k - 1e-12,
            Err(_) => false,
        }
    }
}

/// `Δ = 2C(FC + λ)/(λ + λ_min)` with `F = θ f_k + (1-θ) f_a`.
pub fn delta_exact(
    cfg: &ParetoConfig,
    consts: &LipschitzConstants,
    lambda_min: f64,
) -> Result<f64> {
    let c = require_c(cfg)?;
    let den = cfg.lambda + lambda_min;
    if !(den > 0.0) {
        return Err(domain(format!("λ + λ_min must be positive, got {den}")));
    }
    let f = consts.f(cfg.theta);
    Ok(2.0 * c * (f * c + cfg.lambda) / den)
}

/// Estimator bound
/// `[2C(FC+λ)+G]/(λ+λ_min) + (16 (B/ζ_min) sqrt(ln(d/ρ)/b) + 1/16)(2CP + G)`.
#[allow(clippy::too_many_arguments)]
pub fn delta_estimated(
    cfg: &ParetoConfig,
    consts: &LipschitzConstants,
    lambda_min: f64,
    g_bound: f64,
    zeta_min: f64,
    rho: f64,
    b: usize,
    param_count: usize,
    forget_count: usize,
    retain_count: usize,
) -> Result<f64> {
    let c = require_c(cfg)?;
    let den = cfg.lambda + lambda_min;
    if !(den > 0.0) {
        return Err(domain(format!("λ + λ_min must be positive, got {den}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(domain(format!("ρ must lie in (0, 1), got {rho}")));
    }
    if !(zeta_min > 0.0) {
        return Err(domain("ζ_min must be positive"));
    }
    if b == 0 || forget_count == 0 || retain_count == 0 {
        return Err(domain("b and set sizes must be positive"));
    }
    if !(g_bound >= 0.0) {
        return Err(domain("G must be nonnegative"));
    }
    let f = consts.f(cfg.theta);
    let p = consts.p(cfg.theta);
    let bb = consts.b(cfg.theta, cfg.lambda, forget_count, retain_count);
    let first = (2.0 * c * (f * c + cfg.lambda) + g_bound) / den;
    let conc = 16.0 * (bb / zeta_min) * sqrt(ln(param_count as f64 / rho) / b as f64) + 1.0 / 16.0;
    Ok(first + conc * (2.0 * c * p + g_bound))
}

fn require_c(cfg: &ParetoConfig) -> Result<f64> {
    cfg.c_bound
        .ok_or_else(|| Error::Config("certified paths need a norm bound C".into()))
}

/// `(Δ/ε) sqrt(2 ln(1.25/δ))`.
pub fn sigma_for(delta_bound: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Budget(format!(
            "ε must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Budget(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(delta_bound >= 0.0) {
        return Err(domain(format!("Δ must be nonnegative, got {delta_bound}")));
    }
    Ok(delta_bound / epsilon * sqrt(2.0 * ln(1.25 / delta)))
}

/// Adds `N(0, σ²I)` noise, one standard normal per coordinate from `rng`.
pub fn add_gaussian_noise(w: &ParamVector, sigma: f64, rng: &mut Rng) -> ParamVector {
    let mut out = w.clone();
    if sigma > 0.0 {
        for v in out.values.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += sigma * e;
        }
    }
    out
}

/// Gaussian mechanism: returns the noised weights and `σ`.
pub fn gaussian_mechanism(
    w_tilde: &ParamVector,
    delta_bound: f64,
    epsilon: f64,
    delta: f64,
    rng: &mut Rng,
) -> Result<(ParamVector, f64)> {
    let sigma = sigma_for(delta_bound, epsilon, delta)?;
    Ok((add_gaussian_noise(w_tilde, sigma, rng), sigma))
}

fn release(
    w_tilde: &ParamVector,
    delta_bound: f64,
    budget: &Budget,
    k: usize,
    rng: &mut Rng,
) -> Result<(ParamVector, f64)> {
    let sigma = match budget.sigma_override {
        Some(s) if s >= 0.0 && s.is_finite() => s,
        Some(s) => {
            return Err(Error::Budget(format!(
                "σ override must be nonnegative, got {s}"
            )))
        }
        None => sigma_for(delta_bound, budget.epsilon, budget.delta)? / k as f64,
    };
    Ok((add_gaussian_noise(w_tilde, sigma, rng), sigma))
}

/// Dense Newton step `w* - (H + λI)^{-1} g` for logistic regression.
pub fn newton_step_exact(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
) -> Result<ParamVector> {
    Ok(newton_step_with_hessian(spec, w_star, split, cfg)?.0)
}

fn newton_step_with_hessian(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
) -> Result<(ParamVector, faer::Mat<f64>)> {
    cfg.validate()?;
    let g = pareto_gradient(spec, w_star, split, cfg)?;
    let terms = pareto_terms(split, cfg);
    let h = explicit_hessian(spec, w_star, &terms, cfg.lambda)?;
    let n = g.len();
    let chol = h.cholesky(Side::Lower).map_err(|_| {
        Error::Spectral(format!(
            "H + λI is not positive definite at λ = {}; increase λ",
            cfg.lambda
        ))
    })?;
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| g.values[i]);
    let step = chol.solve(&rhs);
    let resid = &h * &step - &rhs;
    let rn = resid.norm_l2();
    let gn = norm2(&g.values);
    if !(rn <= 1e-8 * gn.max(f64::MIN_POSITIVE)) {
        return Err(Error::Spectral(format!(
            "Newton solve residual {rn:e} exceeds 1e-8 ‖g‖ = {:e}",
            1e-8 * gn
        )));
    }
    let mut w = w_star.clone();
    for i in 0..n {
        w.values[i] -= step[(i, 0)];
    }
    Ok((w, h))
}

/// Where `λ_min` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMinSource {
    /// Smallest eigenvalue of the dense loss Hessian at `w*`.
    Dense,
    /// Zero, appropriate for convex losses.
    Zero,
    Given(f64),
}

/// Smallest eigenvalue of `θ Σ_f ∇²ℓ_K + (1-θ) Σ_r ∇²ℓ_A` at `w`.
pub fn lambda_min_dense(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
) -> Result<f64> {
    let h = explicit_hessian(spec, w, &pareto_terms(split, cfg), 0.0)?;
    Ok(min_eigenvalue(&h))
}

fn min_eigenvalue(h: &faer::Mat<f64>) -> f64 {
    h.selfadjoint_eigenvalues(Side::Lower)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Exact-Hessian certified learner. Returns only the noised weights.
#[allow(clippy::too_many_arguments)]
pub fn certify_exact(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
    consts: &LipschitzConstants,
    budget: &Budget,
    lambda_min: LambdaMinSource,
    seed: u64,
) -> Result<(ParamVector, Certificate)> {
    consts.validate()?;
    let (cfg, _) = cfg.summed(split.forget_idx.len(), split.retain_idx.len())?;
    let cfg = &cfg;
    let c = require_c(cfg)?;
    let (w_tilde, h) = newton_step_with_hessian(spec, w_star, split, cfg)?;
    let lmin = match lambda_min {
        LambdaMinSource::Dense => min_eigenvalue(&h) - cfg.lambda,
        LambdaMinSource::Zero => 0.0,
        LambdaMinSource::Given(v) => v,
    };
    drop(h);
    let delta_bound = match delta_exact(cfg, consts, lmin) {
        Ok(d) => d,
        // the bound only calibrates noise; an overridden σ does not need it
        Err(_) if budget.sigma_override.is_some() => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let mut rng = stream(seed, 0);
    let (w_minus, sigma) = release(&w_tilde, delta_bound, budget, 1, &mut rng)?;
    let cert = Certificate {
        epsilon: budget.epsilon,
        delta: budget.delta,
        theta: cfg.theta,
        lambda: cfg.lambda,
        c_bound: c,
        delta_bound,
        sigma,
        sigma_override: budget.sigma_override.is_some(),
        lambda_min: lmin,
        method: CertMethod::ExactHessian,
        seed,
        g_bound: None,
        zeta_min: None,
    };
    Ok((w_minus, cert))
}

/// Estimator settings shared by the estimator and online learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    pub n: u64,
    pub b: usize,
    pub j_bound: f64,
    pub rho: f64,
    pub g_bound: f64,
    pub zeta_min: f64,
    pub lambda_min: f64,
}

/// Required number of recursion steps
/// `⌈2 κ ln(κ b)⌉` with `κ = B/(λ + λ_min)`, floored at 1.
#[allow(clippy::too_many_arguments)]
pub fn estimator_sample_requirement(
    b: usize,
    lambda: f64,
    lambda_min: f64,
    theta: f64,
    consts: &LipschitzConstants,
    forget_count: usize,
    retain_count: usize,
) -> Result<u64> {
    let den = lambda + lambda_min;
    if !(den > 0.0) {
        return Err(domain(format!("λ + λ_min must be positive, got {den}")));
    }
    if b == 0 || forget_count == 0 || retain_count == 0 {
        return Err(domain("b and set sizes must be positive"));
    }
    let kappa = consts.b(theta, lambda, forget_count, retain_count) / den;
    Ok(n_from_kappa(kappa, b))
}

pub(crate) fn n_from_kappa(kappa: f64, b: usize) -> u64 {
    let v = 2.0 * kappa * ln(kappa * b as f64);
    // ceil with a guard for values that are integers up to rounding
    let c = libm::ceil(v - 1e-9);
    if c < 1.0 {
        1
    } else {
        c as u64
    }
}

fn check_estimator(
    est: &EstimatorParams,
    cfg: &ParetoConfig,
    consts: &LipschitzConstants,
    nf: usize,
    nr: usize,
) -> Result<()> {
    let min_n =
        estimator_sample_requirement(est.b, cfg.lambda, est.lambda_min, cfg.theta, consts, nf, nr)?;
    if est.n < min_n {
        return Err(Error::Precondition { min_n, n: est.n });
    }
    Ok(())
}

/// Certified learner using the stochastic inverse-Hessian estimate.
#[allow(clippy::too_many_arguments)]
pub fn certify_estimated(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
    consts: &LipschitzConstants,
    budget: &Budget,
    est: &EstimatorParams,
    seed: u64,
) -> Result<(ParamVector, Certificate)> {
    cfg.validate()?;
    consts.validate()?;
    let (nf, nr) = (split.forget_idx.len(), split.retain_idx.len());
    let (cfg, _) = cfg.summed(nf, nr)?;
    let cfg = &cfg;
    let c = require_c(cfg)?;
    check_estimator(est, cfg, consts, nf, nr)?;
    let g = pareto_gradient(spec, w_star, split, cfg)?;
    let sampler = MixtureSampler {
        spec: *spec,
        w: &w_star.values,
        split,
        cfg: *cfg,
        sets: None,
    };
    let step = neumann_inverse(&sampler, &g.values, est.j_bound, est.n, est.b, seed, 0)?;
    let mut w_tilde = w_star.clone();
    crate::math::axpy(-1.0, &step, &mut w_tilde.values);
    if !w_tilde.is_finite() {
        return Err(Error::Numeric("estimator output; J may be below ‖H + λI‖"));
    }
    let delta_bound = delta_estimated(
        cfg,
        consts,
        est.lambda_min,
        est.g_bound,
        est.zeta_min,
        est.rho,
        est.b,
        spec.param_count(),
        nf,
        nr,
    )?;
    let mut rng = noise_stream(seed);
    let (w_minus, sigma) = release(&w_tilde, delta_bound, budget, 1, &mut rng)?;
    let cert = Certificate {
        epsilon: budget.epsilon,
        delta: budget.delta,
        theta: cfg.theta,
        lambda: cfg.lambda,
        c_bound: c,
        delta_bound,
        sigma,
        sigma_override: budget.sigma_override.is_some(),
        lambda_min: est.lambda_min,
        method: CertMethod::Estimator {
            n: est.n,
            b: est.b,
            j_bound: est.j_bound,
            rho: est.rho,
        },
        seed,
        g_bound: Some(est.g_bound),
        zeta_min: Some(est.zeta_min),
    };
    Ok((w_minus, cert))
}

fn noise_stream(seed: u64) -> Rng {
    // replica streams use substreams of (seed, request); keep noise apart
    stream(seed, u64::MAX)
}

/// Result of the online learner.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRelease {
    pub w_minus: ParamVector,
    pub certificate: Certificate,
    /// Retain set after the last request.
    pub retain_idx: Vec<usize>,
}

/// Online certified learner over a sequence of disjoint forget requests.
/// `split.dataset` supplies the data; its own forget/retain partition is
/// ignored, since the first retain set is the whole dataset.
///
/// Curvature is sampled at `w*` for every request, gradients at the running
/// iterate. `Δ` uses the smallest forget set and retain set seen, which
/// maximises `B` over the requests.
#[allow(clippy::too_many_arguments)]
pub fn certify_online(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    requests: &[Vec<usize>],
    cfg: &ParetoConfig,
    consts: &LipschitzConstants,
    budget: &Budget,
    est: &EstimatorParams,
    seed: u64,
) -> Result<OnlineRelease> {
    cfg.validate()?;
    consts.validate()?;
    w_star.check(spec)?;
    if cfg.reduction != Reduction::Sum {
        // the set sizes change between requests, so a mean objective has
        // no single summed equivalent
        return Err(Error::Config(
            "the online learner needs the sum reduction".into(),
        ));
    }
    let c = require_c(cfg)?;
    let k = requests.len();
    if k == 0 {
        return Err(domain("online learner needs at least one request"));
    }
    let n = split.dataset.len();
    let mut mark = alloc::vec![false; n];
    for r in requests {
        if r.is_empty() {
            return Err(domain("forget requests must be nonempty"));
        }
        for &i in r {
            if i >= n {
                return Err(domain(format!("index {i} out of range for {n} examples")));
            }
            if mark[i] {
                return Err(domain(format!(
                    "index {i} appears in more than one request"
                )));
            }
            mark[i] = true;
        }
    }

    let mut retain: Vec<usize> = (0..n).collect();
    let mut w = w_star.clone();
    let (mut min_f, mut min_r) = (usize::MAX, usize::MAX);
    for (i, req) in requests.iter().enumerate() {
        let mut forget = req.clone();
        forget.sort_unstable();
        retain.retain(|j| forget.binary_search(j).is_err());
        if retain.is_empty() {
            return Err(domain("requests exhaust the retain set"));
        }
        check_estimator(est, cfg, consts, forget.len(), retain.len())?;
        min_f = min_f.min(forget.len());
        min_r = min_r.min(retain.len());
        let step_split = Split {
            dataset: split.dataset.clone(),
            forget_idx: forget.clone(),
            retain_idx: retain.clone(),
        };
        let g = pareto_gradient(spec, &w, &step_split, cfg)?;
        let sampler = MixtureSampler {
            spec: *spec,
            w: &w_star.values,
            split: &step_split,
            cfg: *cfg,
            sets: Some((&forget, &retain)),
        };
        let step = neumann_inverse(
            &sampler,
            &g.values,
            est.j_bound,
            est.n,
            est.b,
            seed,
            i as u64,
        )?;
        crate::math::axpy(-1.0, &step, &mut w.values);
        if !w.is_finite() {
            return Err(Error::Numeric("estimator output; J may be below ‖H + λI‖"));
        }
    }
    let delta_bound = delta_estimated(
        cfg,
        consts,
        est.lambda_min,
        est.g_bound,
        est.zeta_min,
        est.rho,
        est.b,
        spec.param_count(),
        min_f,
        min_r,
    )?;
    let mut rng = noise_stream(seed);
    let (w_minus, sigma) = release(&w, delta_bound, budget, k, &mut rng)?;
    let certificate = Certificate {
        epsilon: budget.epsilon,
        delta: budget.delta,
        theta: cfg.theta,
        lambda: cfg.lambda,
        c_bound: c,
        delta_bound,
        sigma,
        sigma_override: budget.sigma_override.is_some(),
        lambda_min: est.lambda_min,
        method: CertMethod::Online {
            k,
            n: est.n,
            b: est.b,
            j_bound: est.j_bound,
            rho: est.rho,
        },
        seed,
        g_bound: Some(est.g_bound),
        zeta_min: Some(est.zeta_min),
    };
    Ok(OnlineRelease {
        w_minus,
        certificate,
        retain_idx: retain,
    })
}

/// Hyperparameters of the estimator paths, any of which may be left unset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PartialHyper {
    pub lambda_min: Option<f64>,
    pub lambda: Option<f64>,
    pub j_bound: Option<f64>,
    pub zeta_min: Option<f64>,
    pub n: Option<u64>,
    pub b: Option<usize>,
    pub g_bound: Option<f64>,
    pub p_k: Option<f64>,
    pub p_a: Option<f64>,
    pub f_k: Option<f64>,
    pub f_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedHyper {
    pub lambda_min: f64,
    pub lambda: f64,
    pub j_bound: f64,
    pub zeta_min: f64,
    pub n: u64,
    pub b: usize,
    pub g_bound: f64,
    pub consts: LipschitzConstants,
    /// Names of the fields that were filled by a default rule.
    pub defaulted: Vec<&'static str>,
}

/// Fills unset hyperparameters: constants 1, `λ_min = 0`,
/// `λ = θ p_k + (1-θ) p_a`, `J = 2λ`, `ζ_min = λ + λ_min`, `b = 1`, `n` from
/// [`estimator_sample_requirement`] and `G = ‖∇ at w*‖` (`grad_norm`).
pub fn resolve_defaults(
    partial: &PartialHyper,
    theta: f64,
    forget_count: usize,
    retain_count: usize,
    grad_norm: f64,
) -> Result<ResolvedHyper> {
    let mut defaulted = Vec::new();
    let mut take = |v: Option<f64>, name: &'static str, default: f64| -> f64 {
        v.unwrap_or_else(|| {
            defaulted.push(name);
            default
        })
    };
    let consts = LipschitzConstants {
        p_k: take(partial.p_k, "p_k", 1.0),
        p_a: take(partial.p_a, "p_a", 1.0),
        f_k: take(partial.f_k, "f_k", 1.0),
        f_a: take(partial.f_a, "f_a", 1.0),
    };
    let lambda_min = take(partial.lambda_min, "lambda_min", 0.0);
    let lambda = take(partial.lambda, "lambda", consts.p(theta));
    let j_bound = take(partial.j_bound, "j_bound", 2.0 * lambda);
    let zeta_min = take(partial.zeta_min, "zeta_min", lambda + lambda_min);
    let g_bound = take(partial.g_bound, "g_bound", grad_norm);
    let b = match partial.b {
        Some(b) => b,
        None => {
            defaulted.push("b");
            1
        }
    };
    let n = match partial.n {
        Some(n) => n,
        None => {
            defaulted.push("n");
            estimator_sample_requirement(
                b,
                lambda,
                lambda_min,
                theta,
                &consts,
                forget_count,
                retain_count,
            )?
        }
    };
    Ok(ResolvedHyper {
        lambda_min,
        lambda,
        j_bound,
        zeta_min,
        n,
        b,
        g_bound,
        consts,
        defaulted,
    })
}

impl ResolvedHyper {
    pub fn estimator_params(&self, rho: f64) -> EstimatorParams {
        EstimatorParams {
            n: self.n,
            b: self.b,
            j_bound: self.j_bound,
            rho,
            g_bound: self.g_bound,
            zeta_min: self.zeta_min,
            lambda_min: self.lambda_min,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossKind;

    fn cfg(theta: f64, lambda: f64, c: f64) -> ParetoConfig {
        ParetoConfig::new(theta, lambda, Some(c), LossKind::SquareToUniform).unwrap()
    }

    #[test]
    fn delta_exact_examples() {
        let ones = LipschitzConstants::ones();
        assert_eq!(delta_exact(&cfg(0.3, 1.0, 1.0), &ones, 0.0).unwrap(), 4.0);
        let mut zero_c = cfg(0.3, 1.0, 1.0);
        zero_c.c_bound = Some(0.0);
        assert_eq!(delta_exact(&zero_c, &ones, 0.0).unwrap(), 0.0);
        assert!(delta_exact(&cfg(0.3, 1.0, 1.0), &ones, -1.0).is_err());
        assert!(delta_exact(&cfg(0.3, 1.0, 1.0).with_theta(0.3), &ones, -2.0).is_err());
    }

    #[test]
    fn sigma_spot_value() {
        // 2 sqrt(2 ln 25), mpmath: 5.0745449647180781...
        let s = sigma_for(1.0, 0.5, 0.05).unwrap();
        assert!((s - 5.074544964718078).abs() < 1e-12);
        assert!(matches!(sigma_for(1.0, 1.0, 0.05), Err(Error::Budget(_))));
        assert!(matches!(sigma_for(1.0, 0.5, 0.0), Err(Error::Budget(_))));
        assert_eq!(sigma_for(0.0, 0.5, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn sample_requirement_examples() {
        // κ = 10, b = 1: ⌈20 ln 10⌉ = 47
        assert_eq!(n_from_kappa(10.0, 1), 47);
        assert_eq!(n_from_kappa(1.0, 1), 1);
        // B = (θ p_k + λ)/|D_f| = (9 + 1)/1 = 10 and λ + λ_min = 1
        let consts = LipschitzConstants::new(18.0, 1.0, 1.0, 1.0).unwrap();
        let n = estimator_sample_requirement(1, 1.0, 0.0, 0.5, &consts, 1, 1000).unwrap();
        assert_eq!(n, 47);
    }

    #[test]
    fn defaults_compose() {
        let r = resolve_defaults(&PartialHyper::default(), 0.75, 10, 100, 0.3).unwrap();
        assert_eq!(
            (r.lambda, r.j_bound, r.zeta_min, r.lambda_min),
            (1.0, 2.0, 1.0, 0.0)
        );
        assert_eq!(r.consts, LipschitzConstants::ones());
        assert_eq!(r.g_bound, 0.3);
        assert!(r.defaulted.contains(&"lambda") && r.defaulted.contains(&"n"));

        let p = PartialHyper {
            lambda: Some(3.0),
            ..Default::default()
        };
        let r = resolve_defaults(&p, 0.75, 10, 100, 0.3).unwrap();
        assert_eq!((r.lambda, r.j_bound), (3.0, 6.0));
        assert!(!r.defaulted.contains(&"lambda"));
    }

    #[test]
    fn certificate_pairs_sorted() {
        let c = Certificate {
            epsilon: 0.5,
            delta: 0.05,
            theta: 0.5,
            lambda: 1.0,
            c_bound: 1.0,
            delta_bound: 1.0,
            sigma: 5.08,
            sigma_override: false,
            lambda_min: 0.0,
            method: CertMethod::Online {
                k: 2,
                n: 10,
                b: 1,
                j_bound: 2.0,
                rho: 0.1,
            },
            seed: 3,
            g_bound: Some(0.1),
            zeta_min: Some(1.0),
        };
        let keys: Vec<&str> = c.to_pairs().iter().map(|p| p.0).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(c.verify());
    }
}
