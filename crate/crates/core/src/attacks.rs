//! Confidence-maximisation attacks on forget-set inputs. The attacks ascend
//! `ρ(z) = log Σ_j exp(z_j)` of the logits inside an ℓ∞ ball of radius γ.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{logsumexp, softmax_into, sqrt};
use crate::model::{check_input, input_gradient_unchecked, ModelSpec, ParamVector};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub steps: usize,
    pub step_size: f64,
    pub clamp_unit_box: bool,
}

impl AttackConfig {
    /// 50 steps of size 0.001, α = 0.0001, inputs kept in `[0, 1]`.
    pub fn new(gamma: f64) -> Self {
        AttackConfig {
            gamma,
            alpha: 1e-4,
            steps: 50,
            step_size: 1e-3,
            clamp_unit_box: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(alloc::format!(
                "γ must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config("α must be nonnegative".into()));
        }
        if self.steps == 0 || !(self.step_size > 0.0) {
            return Err(Error::Config(
                "PGD needs at least one step and a positive step size".into(),
            ));
        }
        Ok(())
    }
}

/// Max-shifted log-sum-exp of the logits.
pub fn confidence_objective(logits: &[f64]) -> f64 {
    logsumexp(logits)
}

fn grad_rho(spec: &ModelSpec, w: &[f64], x: &[f64]) -> Vec<f64> {
    input_gradient_unchecked(spec, w, x, |z| {
        let mut p = alloc::vec![0.0; z.len()];
        softmax_into(z, &mut p);
        p
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamp_unit(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn check_inputs(spec: &ModelSpec, w: &ParamVector, inputs: &[Vec<f64>]) -> Result<()> {
    w.check(spec)?;
    for x in inputs {
        check_input(spec, x)?;
    }
    Ok(())
}

/// Adds `N(0, γ I)` noise: γ is the per-coordinate variance.
pub fn gauss_attack(
    inputs: &[Vec<f64>],
    gamma: f64,
    clamp_unit_box: bool,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(gamma > 0.0) {
        return Err(Error::Config(alloc::format!(
            "γ must be positive, got {gamma}"
        )));
    }
    let sd = sqrt(gamma);
    Ok(inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = substream(seed, 0x6A55, i as u64);
            let mut out: Vec<f64> = x
                .iter()
                .map(|&v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + sd * e
                })
                .collect();
            if clamp_unit_box {
                clamp_unit(&mut out);
            }
            out
        })
        .collect())
}

/// Single signed-gradient step of size γ, with the gradient taken at a
/// uniformly jittered start `x + U[-αγ, αγ]`.
pub fn fgsm_attack(
    spec: &ModelSpec,
    w: &ParamVector,
    inputs: &[Vec<f64>],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_inputs(spec, w, inputs)?;
    let r = cfg.alpha * cfg.gamma;
    Ok(inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = substream(seed, 0xF65, i as u64);
            let x0: Vec<f64> = x
                .iter()
                .map(|&v| {
                    if r > 0.0 {
                        v + rng.gen_range(-r..=r)
                    } else {
                        v
                    }
                })
                .collect();
            let g = grad_rho(spec, &w.values, &x0);
            let mut out: Vec<f64> = x
                .iter()
                .zip(&g)
                .map(|(&v, &gv)| v + cfg.gamma * sign(gv))
                .collect();
            if cfg.clamp_unit_box {
                clamp_unit(&mut out);
            }
            out
        })
        .collect())
}

/// Projected signed-gradient ascent from a jittered start. Each step moves
/// by `step_size · sign(∇ρ)` at the current iterate, then projects back into
/// the γ-ball around the clean input (and `[0, 1]` if configured).
pub fn pgd_attack(
    spec: &ModelSpec,
    w: &ParamVector,
    inputs: &[Vec<f64>],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_inputs(spec, w, inputs)?;
    let r = cfg.alpha * cfg.gamma;
    Ok(inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = substream(seed, 0x96D, i as u64);
            let mut cur: Vec<f64> = x
                .iter()
                .map(|&v| {
                    if r > 0.0 {
                        v + rng.gen_range(-r..=r)
                    } else {
                        v
                    }
                })
                .collect();
            for _ in 0..cfg.steps {
                let g = grad_rho(spec, &w.values, &cur);
                for j in 0..cur.len() {
                    let v = cur[j] + cfg.step_size * sign(g[j]);
                    let mut v = v.clamp(x[j] - cfg.gamma, x[j] + cfg.gamma);
                    if cfg.clamp_unit_box {
                        v = v.clamp(0.0, 1.0);
                    }
                    cur[j] = v;
                }
            }
            cur
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_examples() {
        assert!((confidence_objective(&[0.0, 0.0, 0.0]) - 1.098_612_288_668_11).abs() < 1e-12);
        let t = 800.0;
        assert!((confidence_objective(&[t, 0.0, 0.0]) - t).abs() < 1e-12);
        let z = [0.3, -1.0, 2.0];
        let zs = [10.3, 9.0, 12.0];
        assert!((confidence_objective(&zs) - confidence_objective(&z) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sign_of_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(-0.0), 0.0);
    }
}
