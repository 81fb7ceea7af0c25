//! End-to-end runs: load data, split, train, unlearn, attack, and write
//! the report files.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ttp_core::attacks::{fgsm_attack, gauss_attack, pgd_attack, AttackConfig};
use ttp_core::baselines::{gaussian_uniform_baseline, retrain_baseline, synthetic_baseline};
use ttp_core::certify::{
    certify_estimated, certify_exact, certify_online, resolve_defaults, Budget, Certificate,
    LambdaMinSource, LipschitzConstants, PartialHyper,
};
use ttp_core::data::{make_blobs, select_forget, train_test_split, LabeledDataset, Split};
use ttp_core::finetune::{finetune_pareto, pretrain, EarlyStop, History, Method, OptimizerConfig};
use ttp_core::metrics::{evaluate, MetricRow, SplitTag};
use ttp_core::objective::{pareto_gradient, ParetoConfig, Reduction};
use ttp_core::{LossKind, ModelSpec, ParamVector};

use crate::config::KeyValues;
use crate::{checkpoint, idx, records};

pub const METRICS_FILE: &str = "metrics.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ttp";
pub const CERTIFICATE_FILE: &str = "certificate.txt";
pub const SPLIT_FILE: &str = "split.idx.txt";
pub const ATTACK_FILE: &str = "attack.csv";

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($text),+].join(", "))),
                }
            }
        }
    };
}

named_enum!(Pipeline {
    Pretrain => "pretrain",
    Retrain => "retrain",
    Alg1 => "alg1",
    Alg2 => "alg2",
    Alg3 => "alg3",
    Alg4 => "alg4",
    Synthetic => "synthetic",
    GaussianUniform => "gaussian_uniform",
});

named_enum!(AttackKind {
    Gauss => "gauss",
    Fgsm => "fgsm",
    Pgd => "pgd",
});

named_enum!(ModelKind {
    LogReg => "logreg",
    Mlp => "mlp",
});

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForgetSelection {
    Random {
        count: usize,
        seed: u64,
    },
    /// Indices into the training set.
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub model: ModelKind,
    pub hidden: usize,
    /// Start from this checkpoint instead of pretraining.
    pub init: Option<PathBuf>,
    pub forget: ForgetSelection,
    /// Number of online requests the forget set is cut into.
    pub requests: usize,
    pub pipeline: Pipeline,
    pub pareto: ParetoConfig,
    /// Whether `pareto.lambda` was given explicitly.
    pub lambda_given: bool,
    pub pretrain: OptimizerConfig,
    /// Project pretraining iterates onto the `C`-ball.
    pub pretrain_project: bool,
    /// Finetuning for the first-order method, warmup for the certified ones.
    /// Zero epochs skips it.
    pub optimizer: OptimizerConfig,
    pub stop: EarlyStop,
    pub attack: Option<(AttackKind, AttackConfig)>,
    pub budget: Budget,
    pub lambda_min: LambdaMinSource,
    pub hyper: PartialHyper,
    pub rho: f64,
    pub baseline_samples: usize,
    pub baseline_radius: f64,
    pub baseline_variance: f64,
    pub output: PathBuf,
    pub seed: u64,
}

fn fe(e: crate::FormatError) -> anyhow::Error {
    anyhow!(e)
}

fn optimizer_section(
    kv: &mut KeyValues,
    prefix: &str,
    epochs: usize,
    seed: u64,
) -> Result<OptimizerConfig> {
    let key = |k: &str| format!("{prefix}.{k}");
    let lr = kv.take_or(&key("lr"), 0.01).map_err(fe)?;
    let method = match kv
        .take_or(&key("method"), String::from("adam"))
        .map_err(fe)?
        .as_str()
    {
        "adam" => Method::adam(lr),
        "sgd" => Method::Sgd {
            lr,
            momentum: kv.take_or(&key("momentum"), 0.0).map_err(fe)?,
        },
        other => bail!(
            "`{}`: unknown optimizer `{other}` (expected adam or sgd)",
            key("method")
        ),
    };
    Ok(OptimizerConfig {
        method,
        epochs: kv.take_or(&key("epochs"), epochs).map_err(fe)?,
        retain_batch: kv.take_or(&key("retain_batch"), 128).map_err(fe)?,
        forget_batch: kv.take_or(&key("forget_batch"), 10).map_err(fe)?,
        weight_decay: kv.take_or(&key("weight_decay"), 0.0).map_err(fe)?,
        seed,
    })
}

impl ExperimentConfig {
    /// Reads every section; unknown keys are errors.
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let kv = &mut kv;
        let seed: u64 = kv.require("seed").map_err(fe)?;
        let pipeline: Pipeline = kv.require("pipeline").map_err(fe)?;
        let output: PathBuf = kv.require("output").map_err(fe)?;

        let images: Option<PathBuf> = kv.take("data.images").map_err(fe)?;
        let labels: Option<PathBuf> = kv.take("data.labels").map_err(fe)?;
        let blobs: Option<usize> = kv.take("data.blobs.classes").map_err(fe)?;
        let data = match (images, labels, blobs) {
            (Some(images), Some(labels), None) => DataSource::Idx { images, labels },
            (None, None, Some(classes)) => DataSource::Blobs {
                classes,
                per_class: kv.require("data.blobs.per_class").map_err(fe)?,
                dim: kv.require("data.blobs.dim").map_err(fe)?,
                spread: kv.take_or("data.blobs.spread", 1.0).map_err(fe)?,
                seed: kv.take_or("data.blobs.seed", seed).map_err(fe)?,
            },
            _ => bail!("give either data.images and data.labels, or data.blobs.*"),
        };

        let forget = match kv.take_list::<usize>("forget.indices").map_err(fe)? {
            Some(list) => ForgetSelection::Indices(list),
            None => ForgetSelection::Random {
                count: kv.take_or("forget.count", 100).map_err(fe)?,
                seed: kv.take_or("forget.seed", seed).map_err(fe)?,
            },
        };

        let lambda: Option<f64> = kv.take("pareto.lambda").map_err(fe)?;
        let pareto = ParetoConfig {
            theta: kv.take_or("pareto.theta", 0.75).map_err(fe)?,
            lambda: lambda.unwrap_or(0.0),
            c_bound: kv.take("pareto.c_bound").map_err(fe)?,
            forget_loss: kv
                .take_or("pareto.forget_loss", LossKind::KlToUniform)
                .map_err(fe)?,
            retain_loss: LossKind::CrossEntropy,
            reduction: kv.take_or("pareto.reduction", Reduction::Sum).map_err(fe)?,
        };

        let stop = match (
            kv.take::<f64>("stop.max_conf_dist").map_err(fe)?,
            kv.take::<f64>("stop.min_retain_acc").map_err(fe)?,
        ) {
            (None, None) => EarlyStop::disabled(),
            (Some(c), Some(a)) => EarlyStop::new(c, a)?,
            _ => bail!("early stopping needs both stop.max_conf_dist and stop.min_retain_acc"),
        };

        let attack = match kv.take::<AttackKind>("attack.kind").map_err(fe)? {
            None => None,
            Some(kind) => {
                let mut a = AttackConfig::new(kv.require("attack.gamma").map_err(fe)?);
                a.alpha = kv.take_or("attack.alpha", a.alpha).map_err(fe)?;
                a.steps = kv.take_or("attack.steps", a.steps).map_err(fe)?;
                a.step_size = kv.take_or("attack.step_size", a.step_size).map_err(fe)?;
                a.clamp_unit_box = kv.take_or("attack.clamp", a.clamp_unit_box).map_err(fe)?;
                a.validate()?;
                Some((kind, a))
            }
        };

        let budget = match kv.take::<f64>("budget.sigma").map_err(fe)? {
            Some(s) => {
                if kv.contains("budget.epsilon") || kv.contains("budget.delta") {
                    bail!("budget.sigma overrides the noise scale; drop budget.epsilon and budget.delta");
                }
                Budget::with_sigma(s)
            }
            None => Budget::new(
                kv.take_or("budget.epsilon", 0.5).map_err(fe)?,
                kv.take_or("budget.delta", 0.05).map_err(fe)?,
            ),
        };

        let lambda_min = match kv
            .take_or("cert.lambda_min", String::from("zero"))
            .map_err(fe)?
            .as_str()
        {
            "zero" => LambdaMinSource::Zero,
            "dense" => LambdaMinSource::Dense,
            v => LambdaMinSource::Given(
                v.parse()
                    .map_err(|_| anyhow!("cert.lambda_min: expected zero, dense or a number"))?,
            ),
        };
        let hyper = PartialHyper {
            lambda_min: match lambda_min {
                LambdaMinSource::Given(v) => Some(v),
                _ => None,
            },
            lambda: None,
            j_bound: kv.take("cert.j_bound").map_err(fe)?,
            zeta_min: kv.take("cert.zeta_min").map_err(fe)?,
            n: kv.take("cert.n").map_err(fe)?,
            b: kv.take("cert.b").map_err(fe)?,
            g_bound: kv.take("cert.g_bound").map_err(fe)?,
            p_k: kv.take("cert.p_k").map_err(fe)?,
            p_a: kv.take("cert.p_a").map_err(fe)?,
            f_k: kv.take("cert.f_k").map_err(fe)?,
            f_a: kv.take("cert.f_a").map_err(fe)?,
        };

        let cfg = ExperimentConfig {
            data,
            train_fraction: kv.take_or("data.train_fraction", 0.7).map_err(fe)?,
            split_seed: kv.take_or("data.split_seed", 0).map_err(fe)?,
            model: kv.take_or("model.kind", ModelKind::LogReg).map_err(fe)?,
            hidden: kv.take_or("model.hidden", 64).map_err(fe)?,
            init: kv.take("model.init").map_err(fe)?,
            forget,
            requests: kv.take_or("forget.requests", 1).map_err(fe)?,
            pipeline,
            pareto,
            lambda_given: lambda.is_some(),
            pretrain: optimizer_section(kv, "pretrain", 25, seed)?,
            pretrain_project: kv.take_or("pretrain.project", false).map_err(fe)?,
            optimizer: optimizer_section(kv, "optimizer", 100, seed)?,
            stop,
            attack,
            budget,
            lambda_min,
            hyper,
            rho: kv.take_or("cert.rho", 0.1).map_err(fe)?,
            baseline_samples: kv.take_or("baseline.samples", 5).map_err(fe)?,
            baseline_radius: kv.take_or("baseline.radius", 8.0 / 255.0).map_err(fe)?,
            baseline_variance: kv.take_or("baseline.variance", 0.1).map_err(fe)?,
            output,
            seed,
        };
        std::mem::take(kv).finish().map_err(fe)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_kv(KeyValues::parse(&text).map_err(|e| anyhow!(e.in_file(path)))?)
    }

    fn spec_for(&self, ds: &LabeledDataset) -> ModelSpec {
        match self.model {
            ModelKind::LogReg => ModelSpec::LogReg {
                d: ds.dim,
                k: ds.classes,
            },
            ModelKind::Mlp => ModelSpec::Mlp {
                d: ds.dim,
                h: self.hidden,
                k: ds.classes,
            },
        }
    }
}

/// Everything a run produced, mirroring the files in the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub metrics: Vec<MetricRow>,
    pub history: Option<History>,
    pub certificate: Option<Certificate>,
    /// Forget-set metrics after the configured attack.
    pub attack: Option<MetricRow>,
    pub weights: ParamVector,
    pub split: Split,
    pub test: LabeledDataset,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let ds = match &cfg.data {
        DataSource::Idx { images, labels } => idx::load_idx(images, labels).map_err(fe)?,
        DataSource::Blobs {
            classes,
            per_class,
            dim,
            spread,
            seed,
        } => make_blobs(*classes, *per_class, *dim, *spread, *seed)?,
    };
    Ok(train_test_split(&ds, cfg.train_fraction, cfg.split_seed)?)
}

pub fn make_split(cfg: &ExperimentConfig, train: LabeledDataset) -> Result<Split> {
    Ok(match &cfg.forget {
        ForgetSelection::Random { count, seed } => select_forget(train, *count, *seed)?,
        ForgetSelection::Indices(list) => Split::from_forget(train, list.clone())?,
    })
}

/// Retain, test (when nonempty) and forget rows.
pub fn metric_rows(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    test: &LabeledDataset,
) -> Result<Vec<MetricRow>> {
    let ds = &split.dataset;
    let mut rows = vec![evaluate(spec, w, ds, &split.retain_idx, SplitTag::Retain)?];
    if !test.is_empty() {
        rows.push(evaluate(
            spec,
            w,
            test,
            &test.all_indices(),
            SplitTag::Test,
        )?);
    }
    rows.push(evaluate(spec, w, ds, &split.forget_idx, SplitTag::Forget)?);
    Ok(rows)
}

/// Attacks the forget inputs of `split` and evaluates the result.
pub fn attacked_forget_row(
    spec: &ModelSpec,
    w: &ParamVector,
    split: &Split,
    kind: AttackKind,
    attack: &AttackConfig,
    seed: u64,
) -> Result<MetricRow> {
    let ds = &split.dataset;
    let inputs: Vec<Vec<f64>> = split.forget_idx.iter().map(|&i| ds.x(i).to_vec()).collect();
    let adv = match kind {
        AttackKind::Gauss => gauss_attack(&inputs, attack.gamma, attack.clamp_unit_box, seed)?,
        AttackKind::Fgsm => fgsm_attack(spec, w, &inputs, attack, seed)?,
        AttackKind::Pgd => pgd_attack(spec, w, &inputs, attack, seed)?,
    };
    let labels = split.forget_idx.iter().map(|&i| ds.labels[i]).collect();
    let attacked = LabeledDataset::new("attacked", ds.dim, ds.classes, adv.concat(), labels)?;
    Ok(evaluate(
        spec,
        w,
        &attacked,
        &attacked.all_indices(),
        SplitTag::Forget,
    )?)
}

/// Attacks the forget set of a finished run in `run_dir`, reloading its
/// checkpoint and split, and writes the attacked row to its attack file.
pub fn run_attack(
    cfg: &ExperimentConfig,
    run_dir: &Path,
    kind: AttackKind,
    attack: &AttackConfig,
) -> Result<MetricRow> {
    let (train, _) = load_data(cfg).context("stage `load`")?;
    let (forget, retain) = records::read_split(&run_dir.join(SPLIT_FILE))
        .map_err(fe)
        .context("stage `split`")?;
    let split = Split::new(train, forget, retain).context("stage `split`")?;
    let w = checkpoint::load(&run_dir.join(CHECKPOINT_FILE))
        .map_err(fe)
        .context("stage `load`")?;
    let spec = w.spec;
    let row =
        attacked_forget_row(&spec, &w, &split, kind, attack, cfg.seed).context("stage `attack`")?;
    records::write_metrics(&run_dir.join(ATTACK_FILE), std::slice::from_ref(&row))
        .map_err(fe)
        .context("stage `write`")?;
    Ok(row)
}

fn warmup(
    spec: &ModelSpec,
    w: ParamVector,
    split: &Split,
    cfg: &ExperimentConfig,
    pareto: &ParetoConfig,
    test: &LabeledDataset,
) -> Result<(ParamVector, Option<History>)> {
    if cfg.optimizer.epochs == 0 {
        return Ok((w, None));
    }
    let test = (!test.is_empty()).then_some(test);
    let (w, h) = finetune_pareto(spec, &w, split, pareto, &cfg.optimizer, &cfg.stop, test)?;
    Ok((w, Some(h)))
}

/// Runs the configured pipeline and writes its files to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let (train, test) = load_data(cfg).context("stage `load`")?;
    let split = make_split(cfg, train).context("stage `split`")?;
    let spec = cfg.spec_for(&split.dataset);
    let pretrain_c = if cfg.pretrain_project {
        cfg.pareto.c_bound
    } else {
        None
    };

    let pretrained = |what: &str| -> Result<ParamVector> {
        match &cfg.init {
            Some(path) => {
                let w = checkpoint::load(path).map_err(fe)?;
                if w.spec != spec {
                    bail!(
                        "checkpoint holds a {:?}, the configuration needs {:?}",
                        w.spec,
                        spec
                    );
                }
                Ok(w)
            }
            None => pretrain(&spec, &split.dataset, &cfg.pretrain, pretrain_c)
                .with_context(|| format!("stage `{what}`")),
        }
    };

    let mut history = None;
    let mut certificate = None;
    let weights = match cfg.pipeline {
        Pipeline::Pretrain => pretrained("pretrain")?,
        Pipeline::Retrain => {
            retrain_baseline(&spec, &split, &cfg.pretrain).context("stage `retrain`")?
        }
        Pipeline::Synthetic => synthetic_baseline(
            &spec,
            &split,
            cfg.baseline_samples,
            cfg.baseline_radius,
            &cfg.pretrain,
            cfg.seed,
        )
        .context("stage `synthetic`")?,
        Pipeline::GaussianUniform => gaussian_uniform_baseline(
            &spec,
            &split.dataset,
            cfg.baseline_variance,
            &cfg.pretrain,
            cfg.seed,
        )
        .context("stage `gaussian_uniform`")?,
        Pipeline::Alg1 => {
            let w0 = pretrained("pretrain")?;
            let (w, h) =
                warmup(&spec, w0, &split, cfg, &cfg.pareto, &test).context("stage `finetune`")?;
            history = h;
            w
        }
        Pipeline::Alg2 => {
            let w0 = pretrained("pretrain")?;
            let (w_star, h) =
                warmup(&spec, w0, &split, cfg, &cfg.pareto, &test).context("stage `warmup`")?;
            history = h;
            let consts = LipschitzConstants::ones();
            let (w, cert) = certify_exact(
                &spec,
                &w_star,
                &split,
                &cfg.pareto,
                &consts,
                &cfg.budget,
                cfg.lambda_min,
                cfg.seed,
            )
            .context("stage `certify-exact`")?;
            certificate = Some(cert);
            w
        }
        Pipeline::Alg3 | Pipeline::Alg4 => {
            let w0 = pretrained("pretrain")?;
            let (w_star, h) =
                warmup(&spec, w0, &split, cfg, &cfg.pareto, &test).context("stage `warmup`")?;
            history = h;
            let (nf, nr) = (split.forget_idx.len(), split.retain_idx.len());
            let (summed, _) = cfg.pareto.summed(nf, nr)?;
            let mut partial = cfg.hyper;
            partial.lambda = cfg.lambda_given.then_some(summed.lambda);
            let grad_norm = pareto_gradient(&spec, &w_star, &split, &summed)?.norm();
            let stage = if cfg.pipeline == Pipeline::Alg3 {
                "certify-est"
            } else {
                "certify-online"
            };
            let resolved = resolve_defaults(&partial, summed.theta, nf, nr, grad_norm)
                .with_context(|| format!("stage `{stage}`"))?;
            let pareto = ParetoConfig {
                lambda: resolved.lambda,
                ..summed
            };
            let est = resolved.estimator_params(cfg.rho);
            if cfg.pipeline == Pipeline::Alg3 {
                let (w, cert) = certify_estimated(
                    &spec,
                    &w_star,
                    &split,
                    &pareto,
                    &resolved.consts,
                    &cfg.budget,
                    &est,
                    cfg.seed,
                )
                .context("stage `certify-est`")?;
                certificate = Some(cert);
                w
            } else {
                if cfg.requests == 0 || cfg.requests > nf {
                    bail!("stage `certify-online`: forget.requests must lie in 1..={nf}");
                }
                let per = nf.div_ceil(cfg.requests);
                let requests: Vec<Vec<usize>> = split
                    .forget_idx
                    .chunks(per)
                    .map(<[usize]>::to_vec)
                    .collect();
                let out = certify_online(
                    &spec,
                    &w_star,
                    &split,
                    &requests,
                    &pareto,
                    &resolved.consts,
                    &cfg.budget,
                    &est,
                    cfg.seed,
                )
                .context("stage `certify-online`")?;
                certificate = Some(out.certificate);
                out.w_minus
            }
        }
    };

    let metrics = metric_rows(&spec, &weights, &split, &test).context("stage `metrics`")?;
    let attack = match &cfg.attack {
        Some((kind, a)) => Some(
            attacked_forget_row(&spec, &weights, &split, *kind, a, cfg.seed)
                .context("stage `attack`")?,
        ),
        None => None,
    };

    let out = &cfg.output;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let write = || -> std::result::Result<(), crate::FormatError> {
        records::write_metrics(&out.join(METRICS_FILE), &metrics)?;
        records::write_split(&out.join(SPLIT_FILE), &split.forget_idx, &split.retain_idx)?;
        checkpoint::save(&out.join(CHECKPOINT_FILE), &weights)?;
        if let Some(h) = &history {
            records::write_history(&out.join(HISTORY_FILE), h)?;
        }
        if let Some(c) = &certificate {
            records::write_certificate(&out.join(CERTIFICATE_FILE), c)?;
        }
        if let Some(row) = &attack {
            records::write_metrics(&out.join(ATTACK_FILE), std::slice::from_ref(row))?;
        }
        Ok(())
    };
    write().map_err(fe).context("stage `write`")?;

    Ok(RunReport {
        metrics,
        history,
        certificate,
        attack,
        weights,
        split,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(extra: &str) -> KeyValues {
        KeyValues::parse(&format!(
            "seed = 1\npipeline = alg1\noutput = /tmp/x\ndata.blobs.classes = 3\ndata.blobs.per_class = 10\ndata.blobs.dim = 2\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn config_defaults_and_errors() {
        let cfg = ExperimentConfig::from_kv(base("")).unwrap();
        assert_eq!(cfg.pipeline, Pipeline::Alg1);
        assert_eq!(
            cfg.forget,
            ForgetSelection::Random {
                count: 100,
                seed: 1
            }
        );
        assert_eq!(cfg.optimizer.epochs, 100);
        assert!(!cfg.lambda_given);
        assert!(ExperimentConfig::from_kv(base("pareto.thta = 0.5\n")).is_err());
        assert!(ExperimentConfig::from_kv(base("stop.max_conf_dist = 0.1\n")).is_err());
        assert!(
            ExperimentConfig::from_kv(base("budget.sigma = 0.1\nbudget.epsilon = 0.5\n")).is_err()
        );
        let cfg = ExperimentConfig::from_kv(base(
            "cert.lambda_min = 0.25\nattack.kind = pgd\nattack.gamma = 0.1\n",
        ))
        .unwrap();
        assert_eq!(cfg.lambda_min, LambdaMinSource::Given(0.25));
        assert_eq!(cfg.attack.unwrap().1.steps, 50);
    }
}
