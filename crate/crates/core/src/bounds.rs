//! Closed-form privacy and utility bounds.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::certify::LipschitzConstants;
use crate::error::{domain, Result};
use crate::math::{ln, sqrt};

/// A bound value with its validity flag and the inputs that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    /// `None` when the bound does not apply.
    pub value: Option<f64>,
    pub valid: bool,
    pub inputs: Vec<(&'static str, f64)>,
    pub note: Option<String>,
}

/// `sqrt(2 ((1-θ)/θ) |D_r| ln k)`: bound on `‖f(D_f) - U‖∞` at the Pareto
/// optimum when the KL loss is used.
pub fn uniformity_gap_bound(theta: f64, retain_count: usize, class_count: usize) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("θ must lie in (0, 1), got {theta}")));
    }
    if retain_count == 0 || class_count == 0 {
        return Err(domain("counts must be positive"));
    }
    Ok(sqrt(
        2.0 * ((1.0 - theta) / theta) * retain_count as f64 * ln(class_count as f64),
    ))
}

/// Real-valued variant of [`uniformity_gap_bound`] for non-integer `k`.
pub fn uniformity_gap_bound_real(theta: f64, retain_count: f64, classes: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("θ must lie in (0, 1), got {theta}")));
    }
    Ok(sqrt(
        2.0 * ((1.0 - theta) / theta) * retain_count * ln(classes),
    ))
}

/// Smallest θ for which the uniformity gap bound is at most ε:
/// `2|D_r| ln k / (ε² + 2|D_r| ln k)`.
pub fn theta_for_epsilon(retain_count: usize, class_count: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(domain(format!("ε must be positive, got {epsilon}")));
    }
    if retain_count == 0 || class_count < 2 {
        return Err(domain(
            "need a nonempty retain set and at least two classes",
        ));
    }
    let a = 2.0 * retain_count as f64 * ln(class_count as f64);
    Ok(a / (epsilon * epsilon + a))
}

/// `P + 2θCF + sqrt(2θCF (P + 2θCF + 8 p_k))`.
pub fn lambda_validity_threshold(theta: f64, c_bound: f64, consts: &LipschitzConstants) -> f64 {
    let p = consts.p(theta);
    let t = 2.0 * theta * c_bound * consts.f(theta);
    p + t + sqrt(t * (p + t + 8.0 * consts.p_k))
}

/// Bound on the retain-loss gap `|α* - α(θ)|` between the θ-Pareto optimum
/// and the retain-only optimum.
pub fn retain_loss_gap_bound(
    theta: f64,
    lambda: f64,
    c_bound: f64,
    consts: &LipschitzConstants,
) -> BoundReport {
    let p = consts.p(theta);
    let f = consts.f(theta);
    let threshold = lambda_validity_threshold(theta, c_bound, consts);
    let mut inputs = alloc::vec![
        ("theta", theta),
        ("lambda", lambda),
        ("c_bound", c_bound),
        ("p_k", consts.p_k),
        ("p_a", consts.p_a),
        ("f_k", consts.f_k),
        ("f_a", consts.f_a),
        ("lambda_threshold", threshold),
    ];
    let disc =
        (lambda - p) * (lambda - p) - 4.0 * theta * c_bound * f * (2.0 * consts.p_k + lambda);
    inputs.push(("discriminant", disc));
    let note = Some(String::from("threshold uses P in place of the constant L"));
    if disc < 0.0 || lambda < threshold {
        return BoundReport {
            name: "retain_loss_gap",
            value: None,
            valid: false,
            inputs,
            note,
        };
    }
    let dw = (lambda - p - sqrt(disc)) / (2.0 * f);
    let value = 0.5 * consts.p_k * dw * dw + lambda * c_bound * dw;
    inputs.push(("delta_w", dw));
    BoundReport {
        name: "retain_loss_gap",
        value: Some(value),
        valid: true,
        inputs,
        note,
    }
}
