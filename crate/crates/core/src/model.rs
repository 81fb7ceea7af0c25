//! Softmax classifiers with hand-derived gradients and Hessian-vector products.
//!
//! Parameter layout is row-major, weights then biases, input layer first:
//!
//! * `LogReg{d, k}`: `W (k x d)`, `b (k)`.
//! * `Mlp{d, h, k}`: `W1 (h x d)`, `b1 (h)`, `W2 (k x h)`, `b2 (k)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape, Error, Result};
use crate::loss::LossKind;
use crate::math::{axpy, dot, norm2, softmax_into};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    LogReg { d: usize, k: usize },
    Mlp { d: usize, h: usize, k: usize },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelSpec::LogReg { d, k } => d >= 1 && k >= 2,
            ModelSpec::Mlp { d, h, k } => d >= 1 && h >= 1 && k >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("invalid model spec {self:?}")))
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            ModelSpec::LogReg { d, .. } | ModelSpec::Mlp { d, .. } => d,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            ModelSpec::LogReg { k, .. } | ModelSpec::Mlp { k, .. } => k,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            ModelSpec::LogReg { d, k } => k * d + k,
            ModelSpec::Mlp { d, h, k } => h * d + h + k * h + k,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::LogReg { .. } => "logreg",
            ModelSpec::Mlp { .. } => "mlp",
        }
    }
}

/// Flat model parameters tagged with the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub spec: ModelSpec,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: ModelSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        shape(spec.param_count(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameter vector"));
        }
        Ok(ParamVector { spec, values })
    }

    pub fn zeros(spec: ModelSpec) -> Self {
        ParamVector {
            spec,
            values: vec![0.0; spec.param_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.spec != *spec {
            return Err(Error::Config(alloc::format!(
                "parameters belong to {:?}, not {:?}",
                self.spec,
                spec
            )));
        }
        shape(spec.param_count(), self.values.len())?;
        if !self.is_finite() {
            return Err(Error::Numeric("parameter vector"));
        }
        Ok(())
    }
}

/// One feature/label pair borrowed from a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: usize,
}

/// A weighted loss term used to assemble curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term<'a> {
    pub example: Example<'a>,
    pub loss: LossKind,
    pub weight: f64,
}

struct MlpLayout {
    d: usize,
    h: usize,
    k: usize,
}

impl MlpLayout {
    fn w1(&self) -> core::ops::Range<usize> {
        0..self.h * self.d
    }
    fn b1(&self) -> core::ops::Range<usize> {
        let s = self.h * self.d;
        s..s + self.h
    }
    fn w2(&self) -> core::ops::Range<usize> {
        let s = self.h * self.d + self.h;
        s..s + self.k * self.h
    }
    fn b2(&self) -> core::ops::Range<usize> {
        let s = self.h * self.d + self.h + self.k * self.h;
        s..s + self.k
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * n_in..(r + 1) * n_in], x) + b[r];
    }
}

/// `out += W^T g` for a row-major `W` with `g.len()` rows.
fn affine_transpose(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n_in = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            axpy(gr, &w[r * n_in..(r + 1) * n_in], out);
        }
    }
}

/// `gw += s * g x^T`, `gb += s * g`.
fn outer_accumulate(s: f64, g: &[f64], x: &[f64], gw: &mut [f64], gb: &mut [f64]) {
    let n_in = x.len();
    for (r, &gr) in g.iter().enumerate() {
        let c = s * gr;
        if c != 0.0 {
            axpy(c, x, &mut gw[r * n_in..(r + 1) * n_in]);
            gb[r] += c;
        }
    }
}

pub(crate) fn check_input(spec: &ModelSpec, x: &[f64]) -> Result<()> {
    shape(spec.input_dim(), x.len())
}

/// Logits of one input, without validation.
pub(crate) fn logits_unchecked(spec: &ModelSpec, w: &[f64], x: &[f64]) -> Vec<f64> {
    match *spec {
        ModelSpec::LogReg { d, k } => {
            let mut z = vec![0.0; k];
            affine(&w[..k * d], &w[k * d..], x, &mut z);
            z
        }
        ModelSpec::Mlp { d, h, k } => {
            let l = MlpLayout { d, h, k };
            let mut a = vec![0.0; h];
            affine(&w[l.w1()], &w[l.b1()], x, &mut a);
            for v in a.iter_mut() {
                *v = v.max(0.0);
            }
            let mut z = vec![0.0; k];
            affine(&w[l.w2()], &w[l.b2()], &a, &mut z);
            z
        }
    }
}

pub fn logits(spec: &ModelSpec, w: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    w.check(spec)?;
    check_input(spec, x)?;
    Ok(logits_unchecked(spec, &w.values, x))
}

pub(crate) fn probs_unchecked(spec: &ModelSpec, w: &[f64], x: &[f64]) -> Vec<f64> {
    let z = logits_unchecked(spec, w, x);
    let mut p = vec![0.0; z.len()];
    softmax_into(&z, &mut p);
    p
}

/// Softmax probabilities of one input.
pub fn forward(spec: &ModelSpec, w: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    let z = logits(spec, w, x)?;
    let mut p = vec![0.0; z.len()];
    softmax_into(&z, &mut p);
    Ok(p)
}

/// Parameters with PyTorch-style uniform fan-in initialisation.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; spec.param_count()];
    let mut fill = |r: core::ops::Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng| {
        let a = 1.0 / crate::math::sqrt(fan_in as f64);
        for v in &mut values[r] {
            *v = rng.gen_range(-a..a);
        }
    };
    match *spec {
        ModelSpec::LogReg { d, k } => fill(0..k * d + k, d, &mut rng),
        ModelSpec::Mlp { d, h, k } => {
            let l = MlpLayout { d, h, k };
            fill(l.w1().start..l.b1().end, d, &mut rng);
            fill(l.w2().start..l.b2().end, h, &mut rng);
        }
    }
    ParamVector::new(*spec, values)
}

/// Parameters whose outputs are exactly uniform on every input: the final
/// affine layer is zero, earlier layers keep a fixed finite initialisation.
pub fn make_uniform_params(spec: &ModelSpec) -> Result<ParamVector> {
    let mut w = init_params(spec, 0)?;
    let last = match *spec {
        ModelSpec::LogReg { .. } => 0..spec.param_count(),
        ModelSpec::Mlp { d, h, k } => {
            let l = MlpLayout { d, h, k };
            l.w2().start..l.b2().end
        }
    };
    for v in &mut w.values[last] {
        *v = 0.0;
    }
    Ok(w)
}

/// Adds `scale * grad_w loss(w; x, y)` into `grad` and returns the loss.
pub(crate) fn accumulate_grad(
    spec: &ModelSpec,
    w: &[f64],
    x: &[f64],
    y: usize,
    loss: LossKind,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    match *spec {
        ModelSpec::LogReg { d, k } => {
            let mut z = vec![0.0; k];
            affine(&w[..k * d], &w[k * d..], x, &mut z);
            let mut p = vec![0.0; k];
            let mut gz = vec![0.0; k];
            let v = loss.value_grad(&z, y, &mut p, &mut gz);
            let (gw, gb) = grad.split_at_mut(k * d);
            outer_accumulate(scale, &gz, x, gw, gb);
            v
        }
        ModelSpec::Mlp { d, h, k } => {
            let l = MlpLayout { d, h, k };
            let mut z1 = vec![0.0; h];
            affine(&w[l.w1()], &w[l.b1()], x, &mut z1);
            let a: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
            let mut z2 = vec![0.0; k];
            affine(&w[l.w2()], &w[l.b2()], &a, &mut z2);
            let mut p = vec![0.0; k];
            let mut gz2 = vec![0.0; k];
            let v = loss.value_grad(&z2, y, &mut p, &mut gz2);

            let mut ga = vec![0.0; h];
            affine_transpose(&w[l.w2()], &gz2, &mut ga);
            for (g, &zz) in ga.iter_mut().zip(&z1) {
                if zz <= 0.0 {
                    *g = 0.0;
                }
            }
            let (first, second) = grad.split_at_mut(l.w2().start);
            let (gw1, gb1) = first.split_at_mut(h * d);
            let (gw2, gb2) = second.split_at_mut(k * h);
            outer_accumulate(scale, &gz2, &a, gw2, gb2);
            outer_accumulate(scale, &ga, x, gw1, gb1);
            v
        }
    }
}

/// Loss value and exact parameter gradient for one example.
pub fn loss_and_grad(
    spec: &ModelSpec,
    w: &ParamVector,
    example: &Example<'_>,
    loss: LossKind,
) -> Result<(f64, ParamVector)> {
    w.check(spec)?;
    check_input(spec, example.x)?;
    check_label(spec, example.y)?;
    let mut g = ParamVector::zeros(*spec);
    let v = accumulate_grad(
        spec,
        &w.values,
        example.x,
        example.y,
        loss,
        1.0,
        &mut g.values,
    );
    Ok((v, g))
}

pub(crate) fn check_label(spec: &ModelSpec, y: usize) -> Result<()> {
    if y < spec.classes() {
        Ok(())
    } else {
        Err(crate::error::domain(alloc::format!(
            "label {y} out of range for {} classes",
            spec.classes()
        )))
    }
}

/// Adds `scale * H(x) v` into `out`, where `H(x)` is the parameter Hessian of
/// one example's loss.
pub(crate) fn accumulate_hvp(
    spec: &ModelSpec,
    w: &[f64],
    x: &[f64],
    y: usize,
    loss: LossKind,
    scale: f64,
    v: &[f64],
    out: &mut [f64],
) {
    match *spec {
        ModelSpec::LogReg { d, k } => {
            let mut z = vec![0.0; k];
            affine(&w[..k * d], &w[k * d..], x, &mut z);
            let mut dz = vec![0.0; k];
            affine(&v[..k * d], &v[k * d..], x, &mut dz);
            let mut t = vec![0.0; k];
            loss.hess_vec(&z, &dz, &mut t);
            let (ow, ob) = out.split_at_mut(k * d);
            outer_accumulate(scale, &t, x, ow, ob);
        }
        ModelSpec::Mlp { d, h, k } => {
            // forward-over-reverse (Pearlmutter's R-operator)
            let l = MlpLayout { d, h, k };
            let mut z1 = vec![0.0; h];
            affine(&w[l.w1()], &w[l.b1()], x, &mut z1);
            let mask: Vec<bool> = z1.iter().map(|&v| v > 0.0).collect();
            let a: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
            let mut z2 = vec![0.0; k];
            affine(&w[l.w2()], &w[l.b2()], &a, &mut z2);
            let mut p = vec![0.0; k];
            let mut gz2 = vec![0.0; k];
            let _ = loss.value_grad(&z2, y, &mut p, &mut gz2);

            let mut rz1 = vec![0.0; h];
            affine(&v[l.w1()], &v[l.b1()], x, &mut rz1);
            let ra: Vec<f64> = rz1
                .iter()
                .zip(&mask)
                .map(|(&r, &m)| if m { r } else { 0.0 })
                .collect();
            let mut rz2 = vec![0.0; k];
            affine(&v[l.w2()], &v[l.b2()], &a, &mut rz2);
            matvec_add(&w[l.w2()], &ra, &mut rz2);
            let mut rgz2 = vec![0.0; k];
            loss.hess_vec(&z2, &rz2, &mut rgz2);

            // R{ga} = V2^T gz2 + W2^T R{gz2}; R{gz1} = R{ga} masked (ReLU'' = 0)
            let mut rga = vec![0.0; h];
            affine_transpose(&v[l.w2()], &gz2, &mut rga);
            affine_transpose(&w[l.w2()], &rgz2, &mut rga);
            for (g, &m) in rga.iter_mut().zip(&mask) {
                if !m {
                    *g = 0.0;
                }
            }

            let (first, second) = out.split_at_mut(l.w2().start);
            let (ow1, ob1) = first.split_at_mut(h * d);
            let (ow2, ob2) = second.split_at_mut(k * h);
            // R{gW2} = R{gz2} a^T + gz2 R{a}^T
            outer_accumulate(scale, &rgz2, &a, ow2, ob2);
            for (r, &gr) in gz2.iter().enumerate() {
                let c = scale * gr;
                if c != 0.0 {
                    axpy(c, &ra, &mut ow2[r * h..(r + 1) * h]);
                }
            }
            outer_accumulate(scale, &rga, x, ow1, ob1);
        }
    }
}

/// `out += W a` for row-major `W` with `out.len()` rows.
fn matvec_add(w: &[f64], a: &[f64], out: &mut [f64]) {
    let n_in = a.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * n_in..(r + 1) * n_in], a);
    }
}

fn check_batch(spec: &ModelSpec, batch: &[Term<'_>]) -> Result<()> {
    for t in batch {
        check_input(spec, t.example.x)?;
        check_label(spec, t.example.y)?;
        if !t.weight.is_finite() {
            return Err(Error::Numeric("batch weight"));
        }
    }
    Ok(())
}

/// `(sum_i weight_i * H_i) v` without forming any Hessian.
pub fn hvp(
    spec: &ModelSpec,
    w: &ParamVector,
    batch: &[Term<'_>],
    v: &ParamVector,
) -> Result<ParamVector> {
    w.check(spec)?;
    v.check(spec)?;
    check_batch(spec, batch)?;
    let mut out = ParamVector::zeros(*spec);
    for t in batch {
        accumulate_hvp(
            spec,
            &w.values,
            t.example.x,
            t.example.y,
            t.loss,
            t.weight,
            &v.values,
            &mut out.values,
        );
    }
    Ok(out)
}

/// Gradient of `phi(logits)` with respect to the input, given `dphi/dlogits`
/// as a function of the logits.
pub fn input_gradient(
    spec: &ModelSpec,
    w: &ParamVector,
    x: &[f64],
    dphi: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Vec<f64>> {
    w.check(spec)?;
    check_input(spec, x)?;
    Ok(input_gradient_unchecked(spec, &w.values, x, dphi))
}

pub(crate) fn input_gradient_unchecked(
    spec: &ModelSpec,
    w: &[f64],
    x: &[f64],
    dphi: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let mut gx = vec![0.0; x.len()];
    match *spec {
        ModelSpec::LogReg { d, k } => {
            let mut z = vec![0.0; k];
            affine(&w[..k * d], &w[k * d..], x, &mut z);
            let gz = dphi(&z);
            affine_transpose(&w[..k * d], &gz, &mut gx);
        }
        ModelSpec::Mlp { d, h, k } => {
            let l = MlpLayout { d, h, k };
            let mut z1 = vec![0.0; h];
            affine(&w[l.w1()], &w[l.b1()], x, &mut z1);
            let a: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
            let mut z2 = vec![0.0; k];
            affine(&w[l.w2()], &w[l.b2()], &a, &mut z2);
            let gz2 = dphi(&z2);
            let mut ga = vec![0.0; h];
            affine_transpose(&w[l.w2()], &gz2, &mut ga);
            for (g, &zz) in ga.iter_mut().zip(&z1) {
                if zz <= 0.0 {
                    *g = 0.0;
                }
            }
            affine_transpose(&w[l.w1()], &ga, &mut gx);
        }
    }
    gx
}

/// Dense `sum_i weight_i * H_i + lambda I` for logistic regression.
///
/// Built blockwise: for every class pair `(a, b)` the block is
/// `X^T diag(c_ab) X` over bias-augmented inputs, where `c_ab` collects the
/// weighted logit-Hessian entries.
pub fn explicit_hessian(
    spec: &ModelSpec,
    w: &ParamVector,
    batch: &[Term<'_>],
    lambda: f64,
) -> Result<faer::Mat<f64>> {
    let (d, k) = match *spec {
        ModelSpec::LogReg { d, k } => (d, k),
        ModelSpec::Mlp { .. } => return Err(Error::UnsupportedArchitecture("mlp")),
    };
    w.check(spec)?;
    check_batch(spec, batch)?;
    let n = batch.len();
    let da = d + 1;
    let np = spec.param_count();
    let mut hess = faer::Mat::<f64>::zeros(np, np);
    for i in 0..np {
        hess[(i, i)] = lambda;
    }
    if n == 0 {
        return Ok(hess);
    }

    let xa = faer::Mat::<f64>::from_fn(
        n,
        da,
        |i, j| if j < d { batch[i].example.x[j] } else { 1.0 },
    );
    // per-example weighted logit Hessians, stored as coef[(a, b)][i]
    let mut coef = vec![vec![0.0; n]; k * k];
    let mut e = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (i, t) in batch.iter().enumerate() {
        let z = logits_unchecked(spec, &w.values, t.example.x);
        for b in 0..k {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[b] = 1.0;
            t.loss.hess_vec(&z, &e, &mut col);
            for a in 0..k {
                coef[a * k + b][i] = t.weight * col[a];
            }
        }
    }
    let pidx = |class: usize, j: usize| if j < d { class * d + j } else { k * d + class };
    let mut scaled = faer::Mat::<f64>::zeros(n, da);
    for a in 0..k {
        for b in a..k {
            // symmetrise the logit Hessian entry to keep H exactly symmetric
            let c: Vec<f64> = (0..n)
                .map(|i| 0.5 * (coef[a * k + b][i] + coef[b * k + a][i]))
                .collect();
            if c.iter().all(|&v| v == 0.0) {
                continue;
            }
            for j in 0..da {
                for i in 0..n {
                    scaled[(i, j)] = c[i] * xa[(i, j)];
                }
            }
            let block = xa.transpose() * &scaled;
            for r in 0..da {
                for s in 0..da {
                    let v = 0.5 * (block[(r, s)] + block[(s, r)]);
                    hess[(pidx(a, r), pidx(b, s))] += v;
                    if a != b {
                        hess[(pidx(b, s), pidx(a, r))] += v;
                    }
                }
            }
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lr() -> ModelSpec {
        ModelSpec::LogReg { d: 4, k: 3 }
    }

    #[test]
    fn param_counts() {
        assert_eq!(ModelSpec::LogReg { d: 784, k: 10 }.param_count(), 7850);
        assert_eq!(
            ModelSpec::Mlp { d: 4, h: 8, k: 10 }.param_count(),
            32 + 8 + 80 + 10
        );
    }

    #[test]
    fn zero_logreg_is_uniform() {
        let w = ParamVector::zeros(lr());
        let p = forward(&lr(), &w, &[0.3, -2.0, 5.0, 1.0]).unwrap();
        for pi in p {
            assert!((pi - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_bad_shapes_and_nan() {
        let w = ParamVector::zeros(lr());
        assert!(matches!(
            forward(&lr(), &w, &[0.0; 3]),
            Err(Error::Shape { .. })
        ));
        let mut bad = w.clone();
        bad.values[2] = f64::NAN;
        assert!(matches!(
            forward(&lr(), &bad, &[0.0; 4]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn uniform_params_mlp() {
        let spec = ModelSpec::Mlp { d: 4, h: 8, k: 10 };
        let w = make_uniform_params(&spec).unwrap();
        assert!(w.values.iter().any(|&v| v != 0.0));
        let p = forward(&spec, &w, &[0.9, 0.1, 0.4, 0.7]).unwrap();
        for pi in p {
            assert!((pi - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn explicit_hessian_empty_batch_is_lambda_identity() {
        let w = ParamVector::zeros(lr());
        let h = explicit_hessian(&lr(), &w, &[], 1.0).unwrap();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                assert_eq!(h[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn explicit_hessian_rejects_mlp() {
        let spec = ModelSpec::Mlp { d: 2, h: 2, k: 2 };
        let w = ParamVector::zeros(spec);
        assert!(matches!(
            explicit_hessian(&spec, &w, &[], 1.0),
            Err(Error::UnsupportedArchitecture(_))
        ));
    }
}
