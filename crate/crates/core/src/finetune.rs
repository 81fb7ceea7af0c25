//! First-order training: plain pretraining on cross entropy and Pareto
//! finetuning from a pretrained model.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{LabeledDataset, Split};
use crate::error::{domain, Error, Result};
use crate::loss::LossKind;
use crate::math::sqrt;
use crate::metrics::{evaluate, SplitTag};
use crate::model::{accumulate_grad, init_params, ModelSpec, ParamVector};
use crate::objective::{component_losses, project_ball_in_place, ParetoConfig};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Sgd {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Method {
    /// Adam with PyTorch's default moments.
    pub fn adam(lr: f64) -> Self {
        Method::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub epochs: usize,
    pub retain_batch: usize,
    pub forget_batch: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Adam, batches of 128 retain and 10 forget examples, no weight decay.
    pub fn adam(lr: f64, epochs: usize, seed: u64) -> Self {
        OptimizerConfig {
            method: Method::adam(lr),
            epochs,
            retain_batch: 128,
            forget_batch: 10,
            weight_decay: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = match self.method {
            Method::Sgd { lr, momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::Config(format!(
                        "momentum must lie in [0, 1), got {momentum}"
                    )));
                }
                lr
            }
            Method::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                    return Err(Error::Config("invalid Adam moments".into()));
                }
                lr
            }
        };
        if !(lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if self.epochs == 0 || self.retain_batch == 0 || self.forget_batch == 0 {
            return Err(Error::Config(
                "epochs and batch sizes must be at least 1".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        Ok(())
    }
}

struct Optimizer {
    method: Method,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    fn new(method: Method, n: usize) -> Self {
        let v = match method {
            Method::Adam { .. } => vec![0.0; n],
            Method::Sgd { .. } => Vec::new(),
        };
        Optimizer {
            method,
            m: vec![0.0; n],
            v,
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64]) {
        self.t += 1;
        match self.method {
            Method::Sgd { lr, momentum } => {
                for i in 0..w.len() {
                    self.m[i] = momentum * self.m[i] + g[i];
                    w[i] -= lr * self.m[i];
                }
            }
            Method::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let c1 = 1.0 - libm::pow(beta1, self.t as f64);
                let c2 = 1.0 - libm::pow(beta2, self.t as f64);
                for i in 0..w.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    w[i] -= lr * mh / (sqrt(vh) + eps);
                }
            }
        }
    }
}

/// Trains from a fresh initialisation on mean cross entropy.
pub fn pretrain(
    spec: &ModelSpec,
    train: &LabeledDataset,
    opt: &OptimizerConfig,
    c_bound: Option<f64>,
) -> Result<ParamVector> {
    let w0 = init_params(spec, opt.seed)?;
    train_cross_entropy(spec, w0, train, &train.all_indices(), opt, c_bound)
}

/// Mean cross-entropy minibatch training on `idx`, starting from `w0`.
pub fn train_cross_entropy(
    spec: &ModelSpec,
    w0: ParamVector,
    train: &LabeledDataset,
    idx: &[usize],
    opt: &OptimizerConfig,
    c_bound: Option<f64>,
) -> Result<ParamVector> {
    opt.validate()?;
    w0.check(spec)?;
    crate::error::shape(spec.input_dim(), train.dim)?;
    if idx.is_empty() {
        return Err(domain("training set is empty"));
    }
    let mut w = w0;
    let mut order = idx.to_vec();
    let mut rng = stream(opt.seed, 1);
    let mut optim = Optimizer::new(opt.method, w.len());
    let mut g = vec![0.0; w.len()];
    for epoch in 1..=opt.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(opt.retain_batch) {
            g.iter_mut().for_each(|v| *v = 0.0);
            let s = 1.0 / batch.len() as f64;
            for &i in batch {
                total += accumulate_grad(
                    spec,
                    &w.values,
                    train.x(i),
                    train.labels[i],
                    LossKind::CrossEntropy,
                    s,
                    &mut g,
                );
            }
            if opt.weight_decay > 0.0 {
                crate::math::axpy(opt.weight_decay, &w.values, &mut g);
            }
            optim.step(&mut w.values, &g);
            if let Some(c) = c_bound {
                project_ball_in_place(&mut w.values, c);
            }
        }
        if !total.is_finite() || !w.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: "non-finite loss".into(),
            });
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub max_conf_dist: f64,
    pub min_retain_acc: f64,
    pub enabled: bool,
}

impl EarlyStop {
    pub fn disabled() -> Self {
        EarlyStop {
            max_conf_dist: 1.0,
            min_retain_acc: 0.0,
            enabled: false,
        }
    }

    pub fn new(max_conf_dist: f64, min_retain_acc: f64) -> Result<Self> {
        let s = EarlyStop {
            max_conf_dist,
            min_retain_acc,
            enabled: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_conf_dist) || !(0.0..=1.0).contains(&self.min_retain_acc)
        {
            return Err(Error::Config(
                "early-stop thresholds must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn accepts(&self, row: &HistoryRow) -> bool {
        row.conf_dist <= self.max_conf_dist && row.retain_acc >= self.min_retain_acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub retain_acc: f64,
    pub test_acc: Option<f64>,
    /// Mean confidence distance over the forget set.
    pub conf_dist: f64,
    pub l_k: f64,
    pub l_a: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub rows: Vec<HistoryRow>,
    /// Epoch whose weights were returned.
    pub selected_epoch: usize,
    /// Set when early stopping was on but no iterate met the thresholds.
    pub warning: bool,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,retain_acc,test_acc,conf_dist,L_K,L_A";
}

fn record(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
    test: Option<&LabeledDataset>,
    epoch: usize,
) -> Result<HistoryRow> {
    let ds = &split.dataset;
    let retain = evaluate(spec, w, ds, &split.retain_idx, SplitTag::Retain)?;
    let forget = evaluate(spec, w, ds, &split.forget_idx, SplitTag::Forget)?;
    let test_acc = match test {
        Some(t) if !t.is_empty() => {
            Some(evaluate(spec, w, t, &t.all_indices(), SplitTag::Test)?.accuracy)
        }
        _ => None,
    };
    let (l_k, l_a) = component_losses(spec, w, split, cfg)?;
    Ok(HistoryRow {
        epoch,
        retain_acc: retain.accuracy,
        test_acc,
        conf_dist: forget.conf_dist_mean,
        l_k,
        l_a,
    })
}

/// Cycles through the forget set in reshuffled passes.
struct ForgetCycle {
    order: Vec<usize>,
    pos: usize,
}

impl ForgetCycle {
    fn next_batch(&mut self, size: usize, rng: &mut Rng) -> &[usize] {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let b = &self.order[self.pos..end];
        self.pos = end;
        b
    }
}

/// Minimises the Pareto objective starting from `w_star`.
///
/// Each step combines a retain and a forget minibatch, each rescaled so the
/// stochastic gradient is unbiased for the configured objective. Metrics are
/// recorded after every epoch (epoch 0 is the starting point). With early
/// stopping enabled the returned weights are those of the recorded epoch with
/// the lowest forget confidence distance among epochs meeting both
/// thresholds; otherwise the final weights are returned.
pub fn finetune_pareto(
    spec: &ModelSpec,
    w_star: &ParamVector,
    split: &Split,
    cfg: &ParetoConfig,
    opt: &OptimizerConfig,
    stop: &EarlyStop,
    test: Option<&LabeledDataset>,
) -> Result<(ParamVector, History)> {
    cfg.validate()?;
    opt.validate()?;
    stop.validate()?;
    w_star.check(spec)?;
    let ds = &split.dataset;
    let nf = split.forget_idx.len() as f64;
    let nr = split.retain_idx.len() as f64;
    let (wf, wr) = cfg.weights(split.forget_idx.len(), split.retain_idx.len());

    let mut w = w_star.clone();
    let mut optim = Optimizer::new(opt.method, w.len());
    let mut retain_rng = stream(opt.seed, 2);
    let mut forget_rng = stream(opt.seed, 3);
    let mut retain_order = split.retain_idx.clone();
    let mut forget = ForgetCycle {
        order: split.forget_idx.clone(),
        pos: usize::MAX,
    };
    let mut g = vec![0.0; w.len()];

    let mut history = History::default();
    history.rows.push(record(spec, &w, split, cfg, test, 0)?);
    let mut best: Option<(f64, usize, ParamVector)> = None;
    let consider = |row: &HistoryRow,
                    w: &ParamVector,
                    best: &mut Option<(f64, usize, ParamVector)>| {
        if stop.enabled && stop.accepts(row) && best.as_ref().is_none_or(|b| row.conf_dist < b.0)
        {
            *best = Some((row.conf_dist, row.epoch, w.clone()));
        }
    };
    consider(&history.rows[0], &w, &mut best);

    for epoch in 1..=opt.epochs {
        retain_order.shuffle(&mut retain_rng);
        for rb in retain_order.chunks(opt.retain_batch) {
            g.iter_mut().for_each(|v| *v = 0.0);
            let fb = forget.next_batch(opt.forget_batch, &mut forget_rng);
            let sf = wf * nf / fb.len() as f64;
            for &i in fb {
                accumulate_grad(
                    spec,
                    &w.values,
                    ds.x(i),
                    ds.labels[i],
                    cfg.forget_loss,
                    sf,
                    &mut g,
                );
            }
            let sr = wr * nr / rb.len() as f64;
            for &i in rb {
                accumulate_grad(
                    spec,
                    &w.values,
                    ds.x(i),
                    ds.labels[i],
                    cfg.retain_loss,
                    sr,
                    &mut g,
                );
            }
            let decay = cfg.lambda + opt.weight_decay;
            if decay > 0.0 {
                crate::math::axpy(decay, &w.values, &mut g);
            }
            optim.step(&mut w.values, &g);
            if let Some(c) = cfg.c_bound {
                project_ball_in_place(&mut w.values, c);
            }
        }
        if !w.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: "non-finite parameters".into(),
            });
        }
        let row = record(spec, &w, split, cfg, test, epoch)?;
        if !row.l_k.is_finite() || !row.l_a.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: "non-finite loss".into(),
            });
        }
        consider(&row, &w, &mut best);
        history.rows.push(row);
    }

    if stop.enabled {
        if let Some((_, epoch, wb)) = best {
            history.selected_epoch = epoch;
            return Ok((wb, history));
        }
        history.warning = true;
    }
    history.selected_epoch = opt.epochs;
    Ok((w, history))
}
