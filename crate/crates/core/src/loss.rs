//! Per-example losses expressed on logits, with first and second derivatives.

use core::fmt;
use core::str::FromStr;

use alloc::format;
use alloc::vec;

use crate::error::Error;
use crate::math::{dot, ln, softmax_into};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `-ln p_y`.
    CrossEntropy,
    /// KL divergence from the uniform distribution: `sum_j p_j ln(k p_j)`.
    KlToUniform,
    /// `sum_j (p_j - 1/k)^2`.
    SquareToUniform,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::KlToUniform => "kl_to_uniform",
            LossKind::SquareToUniform => "square_to_uniform",
        }
    }

    /// Loss value at logits `z`. Writes the softmax into `p` and the gradient
    /// with respect to `z` into `g`.
    pub fn value_grad(self, z: &[f64], y: usize, p: &mut [f64], g: &mut [f64]) -> f64 {
        let k = z.len();
        let lse = softmax_into(z, p);
        match self {
            LossKind::CrossEntropy => {
                g.copy_from_slice(p);
                g[y] -= 1.0;
                lse - z[y]
            }
            LossKind::KlToUniform => {
                // log-probabilities straight from the logits, so one-hot
                // outputs never hit ln(0)
                let mut m = 0.0;
                for j in 0..k {
                    m += p[j] * (z[j] - lse);
                }
                for j in 0..k {
                    g[j] = p[j] * ((z[j] - lse) - m);
                }
                (m + ln(k as f64)).max(0.0)
            }
            LossKind::SquareToUniform => {
                let c = 1.0 / k as f64;
                let mut v = 0.0;
                let mut pr = 0.0;
                for j in 0..k {
                    let r = p[j] - c;
                    v += r * r;
                    pr += p[j] * r;
                }
                for j in 0..k {
                    g[j] = 2.0 * p[j] * ((p[j] - c) - pr);
                }
                v
            }
        }
    }

    pub fn value(self, z: &[f64], y: usize) -> f64 {
        let mut p = vec![0.0; z.len()];
        let mut g = vec![0.0; z.len()];
        self.value_grad(z, y, &mut p, &mut g)
    }

    /// Second directional derivative on logits: writes `(d^2 loss / dz^2) dz`
    /// into `out`.
    pub fn hess_vec(self, z: &[f64], dz: &[f64], out: &mut [f64]) {
        let k = z.len();
        let mut p = vec![0.0; k];
        let lse = softmax_into(z, &mut p);
        // dp = J dz with J = diag(p) - p p^T
        let pdz = dot(&p, dz);
        let dp: alloc::vec::Vec<f64> = (0..k).map(|j| p[j] * (dz[j] - pdz)).collect();
        match self {
            LossKind::CrossEntropy => out.copy_from_slice(&dp),
            LossKind::KlToUniform => {
                let s: alloc::vec::Vec<f64> = z.iter().map(|&zj| zj - lse).collect();
                let m = dot(&p, &s);
                let dm = dot(&dp, &s);
                for a in 0..k {
                    out[a] = dp[a] * (s[a] - m) + p[a] * ((dz[a] - pdz) - dm);
                }
            }
            LossKind::SquareToUniform => {
                let c = 1.0 / k as f64;
                let pr: f64 = (0..k).map(|j| p[j] * (p[j] - c)).sum();
                let dpr: f64 = (0..k).map(|j| dp[j] * (p[j] - c)).sum();
                let pdp = dot(&p, &dp);
                for a in 0..k {
                    let r = p[a] - c;
                    // d/dε of 2 p_a (r_a - p.r) along dz
                    out[a] = 2.0 * (dp[a] * (r - pr) + p[a] * (dp[a] - dpr - pdp));
                }
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            "kl_to_uniform" | "kl" => Ok(LossKind::KlToUniform),
            "square_to_uniform" | "square" => Ok(LossKind::SquareToUniform),
            other => Err(Error::Config(format!("unknown loss kind `{other}`"))),
        }
    }
}
