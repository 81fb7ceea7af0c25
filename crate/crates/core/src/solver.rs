//! Full-batch minimisation of the Pareto objective by Newton-CG with an
//! Armijo backtracking line search. Used where a solution accurate to a
//! small gradient norm is required, such as reference optima on convex
//! problems.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Split;
use crate::error::{Error, Result};
use crate::math::{axpy, dot, norm2};
use crate::model::{accumulate_hvp, ModelSpec, ParamVector};
use crate::objective::{pareto_gradient, pareto_value, ParetoConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once `‖∇‖₂` is at most this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Conjugate-gradient iterations per Newton step.
    pub max_cg: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-6,
            max_iter: 200,
            max_cg: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub value: f64,
    pub converged: bool,
}

fn objective_hvp(
    spec: &ModelSpec,
    w: &[f64],
    split: &Split,
    cfg: &ParetoConfig,
    v: &[f64],
    out: &mut [f64],
) {
    let ds = &split.dataset;
    let (wf, wr) = cfg.weights(split.forget_idx.len(), split.retain_idx.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    if wf > 0.0 {
        for &i in &split.forget_idx {
            accumulate_hvp(spec, w, ds.x(i), ds.labels[i], cfg.forget_loss, wf, v, out);
        }
    }
    if wr > 0.0 {
        for &i in &split.retain_idx {
            accumulate_hvp(spec, w, ds.x(i), ds.labels[i], cfg.retain_loss, wr, v, out);
        }
    }
    axpy(cfg.lambda, v, out);
}

/// Approximately solves `H d = -g` by conjugate gradients, stopping at
/// negative curvature. Falls back to `-g` when the first direction already
/// has nonpositive curvature.
fn newton_direction(
    spec: &ModelSpec,
    w: &[f64],
    split: &Split,
    cfg: &ParetoConfig,
    g: &[f64],
    max_cg: usize,
) -> Vec<f64> {
    let n = g.len();
    let gn = norm2(g);
    let tol = (0.5f64).min(crate::math::sqrt(gn)) * gn;
    let mut d = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut hp = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..max_cg {
        objective_hvp(spec, w, split, cfg, &p, &mut hp);
        let curv = dot(&p, &hp);
        if !(curv > 0.0) {
            if it == 0 {
                return r;
            }
            break;
        }
        let a = rr / curv;
        axpy(a, &p, &mut d);
        axpy(-a, &hp, &mut r);
        let rr_new = dot(&r, &r);
        if crate::math::sqrt(rr_new) <= tol {
            break;
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    d
}

/// Minimises [`pareto_value`] from `w0` without a norm constraint. `θ` may
/// be 0 or 1.
pub fn minimize_pareto(
    spec: &ModelSpec,
    w0: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
    opts: &SolveOptions,
) -> Result<(ParamVector, SolveReport)> {
    cfg.validate_edges()?;
    let mut w = w0.clone();
    let mut f = pareto_value(spec, &w, split, cfg)?;
    let mut g = pareto_gradient(spec, &w, split, cfg)?;
    for iter in 0..opts.max_iter {
        let gn = g.norm();
        if gn <= opts.grad_tol {
            return Ok((
                w,
                SolveReport {
                    iterations: iter,
                    grad_norm: gn,
                    value: f,
                    converged: true,
                },
            ));
        }
        let mut d = newton_direction(spec, &w.values, split, cfg, &g.values, opts.max_cg);
        let mut slope = dot(&d, &g.values);
        if !(slope < 0.0) {
            d = g.values.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = w.clone();
            axpy(t, &d, &mut trial.values);
            let ft = pareto_value(spec, &trial, split, cfg)?;
            if ft <= f + 1e-4 * t * slope {
                w = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        g = pareto_gradient(spec, &w, split, cfg)?;
        if !accepted {
            // no decrease representable in floating point
            let gn = g.norm();
            return Ok((
                w,
                SolveReport {
                    iterations: iter + 1,
                    grad_norm: gn,
                    value: f,
                    converged: gn <= opts.grad_tol,
                },
            ));
        }
        if !f.is_finite() {
            return Err(Error::Numeric("objective diverged"));
        }
    }
    let gn = g.norm();
    Ok((
        w,
        SolveReport {
            iterations: opts.max_iter,
            grad_norm: gn,
            value: f,
            converged: gn <= opts.grad_tol,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, select_forget};
    use crate::loss::LossKind;

    #[test]
    fn reaches_tolerance_on_blobs() {
        let split = select_forget(make_blobs(3, 30, 2, 1.0, 0).unwrap(), 5, 1).unwrap();
        let spec = ModelSpec::LogReg { d: 2, k: 3 };
        let cfg = ParetoConfig::new(0.5, 0.1, None, LossKind::SquareToUniform).unwrap();
        let (w, rep) = minimize_pareto(
            &spec,
            &ParamVector::zeros(spec),
            &split,
            &cfg,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(rep.converged && rep.grad_norm <= 1e-6, "{rep:?}");
        assert!(pareto_gradient(&spec, &w, &split, &cfg).unwrap().norm() <= 1e-6);
    }
}
