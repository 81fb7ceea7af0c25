use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use ttp::config::KeyValues;
use ttp::experiment::{self, AttackKind, ExperimentConfig, Pipeline};
use ttp::records;
use ttp_core::attacks::AttackConfig;
use ttp_core::bounds::{
    lambda_validity_threshold, retain_loss_gap_bound, theta_for_epsilon, uniformity_gap_bound,
    BoundReport,
};
use ttp_core::certify::LipschitzConstants;
use ttp_core::metrics::MetricRow;

#[derive(Parser)]
#[command(
    name = "ttp",
    version,
    about = "Pareto uniformity finetuning and certified releases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the full training set with cross entropy.
    Pretrain(RunArgs),
    /// Pareto finetuning of a pretrained model.
    Finetune(RunArgs),
    /// Warmup, exact Newton step and Gaussian noise.
    CertifyExact(CertArgs),
    /// Warmup, estimated Newton step and Gaussian noise.
    CertifyEst(CertArgs),
    /// Sequential forget requests with the estimated Newton step.
    CertifyOnline {
        #[command(flatten)]
        cert: CertArgs,
        /// Number of requests the forget set is cut into.
        #[arg(long)]
        requests: Option<usize>,
    },
    /// Attack the forget set of a finished run.
    Attack {
        #[command(flatten)]
        run: RunArgs,
        /// Directory of the run to attack.
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = "pgd")]
        kind: AttackKind,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Leave inputs outside [0, 1] unclamped.
        #[arg(long)]
        no_clamp: bool,
    },
    /// Retraining baselines.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "retrain")]
        kind: BaselineKind,
        /// Synthetic points per forget example.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        variance: Option<f64>,
    },
    /// Evaluate closed-form bounds.
    Bounds(BoundArgs),
    /// Print the metrics of finished runs.
    Report {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BaselineKind {
    Retrain,
    Synthetic,
    GaussianUniform,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// logreg or mlp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Start from this checkpoint instead of pretraining.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    forget_count: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    c_bound: Option<f64>,
    #[arg(long)]
    forget_loss: Option<String>,
    /// sum or mean.
    #[arg(long)]
    reduction: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Any configuration key, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args, Clone)]
struct CertArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Fixed noise scale; the certificate then carries no guarantee.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// zero, dense or a number.
    #[arg(long)]
    lambda_min: Option<String>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    j_bound: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    retain_count: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    c_bound: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    p_k: f64,
    #[arg(long, default_value_t = 1.0)]
    p_a: f64,
    #[arg(long, default_value_t = 1.0)]
    f_k: f64,
    #[arg(long, default_value_t = 1.0)]
    f_a: f64,
    /// Also write the reports as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl RunArgs {
    fn key_values(&self, pipeline: Pipeline) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                KeyValues::parse(&text).map_err(|e| anyhow!(e.in_file(path)))?
            }
            None => KeyValues::default(),
        };
        kv.set("seed", self.seed.to_string());
        kv.set("pipeline", pipeline.name());
        let path = |p: &PathBuf| p.display().to_string();
        let pairs: [(&str, Option<String>); 14] = [
            ("output", self.out.as_ref().map(path)),
            ("data.images", self.images.as_ref().map(path)),
            ("data.labels", self.labels.as_ref().map(path)),
            ("model.kind", self.model.clone()),
            ("model.hidden", self.hidden.map(|v| v.to_string())),
            ("model.init", self.init.as_ref().map(path)),
            ("forget.count", self.forget_count.map(|v| v.to_string())),
            ("pareto.theta", self.theta.map(|v| v.to_string())),
            ("pareto.lambda", self.lambda.map(|v| v.to_string())),
            ("pareto.c_bound", self.c_bound.map(|v| v.to_string())),
            ("pareto.forget_loss", self.forget_loss.clone()),
            ("pareto.reduction", self.reduction.clone()),
            ("optimizer.epochs", self.epochs.map(|v| v.to_string())),
            ("optimizer.lr", self.lr.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                kv.set(k, v);
            }
        }
        if !kv.contains("output") {
            kv.set("output", "out");
        }
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
            kv.set(k.trim(), v.trim());
        }
        Ok(kv)
    }

    fn config(&self, pipeline: Pipeline) -> Result<ExperimentConfig> {
        ExperimentConfig::from_kv(self.key_values(pipeline)?)
    }
}

impl CertArgs {
    fn key_values(&self, pipeline: Pipeline) -> Result<KeyValues> {
        let mut kv = self.run.key_values(pipeline)?;
        let pairs = [
            ("budget.sigma", self.sigma.map(|v| v.to_string())),
            ("budget.epsilon", self.epsilon.map(|v| v.to_string())),
            ("budget.delta", self.delta.map(|v| v.to_string())),
            ("cert.lambda_min", self.lambda_min.clone()),
            ("cert.n", self.n.map(|v| v.to_string())),
            ("cert.b", self.b.map(|v| v.to_string())),
            ("cert.j_bound", self.j_bound.map(|v| v.to_string())),
            ("cert.rho", self.rho.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                kv.set(k, v);
            }
        }
        Ok(kv)
    }
}

fn print_rows(title: &str, rows: &[MetricRow]) {
    println!("{title}");
    println!(
        "  {:<8} {:>6} {:>10} {:>10} {:>14}",
        "split", "n", "accuracy", "conf_dist", "l2_uniformity"
    );
    for r in rows {
        println!(
            "  {:<8} {:>6} {:>10.4} {:>10.4} {:>14.4}",
            r.split.name(),
            r.n,
            r.accuracy,
            r.conf_dist_mean,
            r.l2_uniformity_mean
        );
    }
}

fn run(pipeline: Pipeline, kv: KeyValues) -> Result<()> {
    let cfg = ExperimentConfig::from_kv(kv)?;
    let report = experiment::run_experiment(&cfg)?;
    print_rows(
        &format!("{} -> {}", pipeline.name(), cfg.output.display()),
        &report.metrics,
    );
    if let Some(h) = &report.history {
        println!(
            "  selected epoch {}{}",
            h.selected_epoch,
            if h.warning {
                " (no epoch met the early-stop thresholds)"
            } else {
                ""
            }
        );
    }
    if let Some(c) = &report.certificate {
        println!(
            "  delta_bound {:e}  sigma {:e}  verified {}",
            c.delta_bound,
            c.sigma,
            c.verify()
        );
    }
    if let Some(a) = &report.attack {
        print_rows("  after attack", std::slice::from_ref(a));
    }
    Ok(())
}

fn bound_line(r: &BoundReport) -> String {
    let value = r
        .value
        .map(|v| format!("{v:.6e}"))
        .unwrap_or_else(|| "-".into());
    let inputs: Vec<String> = r.inputs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!(
        "{:<22} {:>14} {:>6}  {}",
        r.name,
        value,
        r.valid,
        inputs.join(" ")
    )
}

fn bounds(args: &BoundArgs) -> Result<()> {
    let consts = LipschitzConstants::new(args.p_k, args.p_a, args.f_k, args.f_a)?;
    let mut reports = Vec::new();
    if let (Some(n), Some(k)) = (args.retain_count, args.classes) {
        let inputs = vec![
            ("theta", args.theta),
            ("retain_count", n as f64),
            ("classes", k as f64),
        ];
        let value = uniformity_gap_bound(args.theta, n, k).ok();
        reports.push(BoundReport {
            name: "uniformity_gap",
            value,
            valid: value.is_some(),
            inputs,
            note: None,
        });
        if let Some(eps) = args.epsilon {
            let value = theta_for_epsilon(n, k, eps).ok();
            let inputs = vec![
                ("epsilon", eps),
                ("retain_count", n as f64),
                ("classes", k as f64),
            ];
            reports.push(BoundReport {
                name: "theta_for_epsilon",
                value,
                valid: value.is_some(),
                inputs,
                note: None,
            });
        }
    }
    if let Some(c) = args.c_bound {
        let t = lambda_validity_threshold(args.theta, c, &consts);
        let inputs = vec![("theta", args.theta), ("c_bound", c)];
        reports.push(BoundReport {
            name: "lambda_threshold",
            value: Some(t),
            valid: true,
            inputs,
            note: None,
        });
        if let Some(l) = args.lambda {
            reports.push(retain_loss_gap_bound(args.theta, l, c, &consts));
        }
    }
    if reports.is_empty() {
        return Err(anyhow!(
            "nothing to evaluate: give --retain-count and --classes, or --c-bound"
        ));
    }
    println!("{:<22} {:>14} {:>6}  inputs", "bound", "value", "valid");
    for r in &reports {
        println!("{}", bound_line(r));
        if let Some(n) = &r.note {
            println!("{:<22} note: {n}", "");
        }
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["bound", "value", "valid", "inputs"])?;
        for r in &reports {
            let inputs: Vec<String> = r.inputs.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
            w.write_record([
                r.name.to_string(),
                r.value.map(|v| format!("{v:?}")).unwrap_or_default(),
                r.valid.to_string(),
                inputs.join(";"),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn report(runs: &[PathBuf]) -> Result<()> {
    for dir in runs {
        let rows = records::read_metrics(&dir.join(experiment::METRICS_FILE))?;
        print_rows(&dir.display().to_string(), &rows);
        let attack = dir.join(experiment::ATTACK_FILE);
        if attack.exists() {
            print_rows("  after attack", &records::read_metrics(&attack)?);
        }
        let cert = dir.join(experiment::CERTIFICATE_FILE);
        if cert.exists() {
            let c = records::read_certificate(&cert)?;
            println!(
                "  certificate {}: sigma {:e}, delta_bound {:e}, verified {}",
                c.method.name(),
                c.sigma,
                c.delta_bound,
                c.verify()
            );
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(a) => run(Pipeline::Pretrain, a.key_values(Pipeline::Pretrain)?),
        Command::Finetune(a) => run(Pipeline::Alg1, a.key_values(Pipeline::Alg1)?),
        Command::CertifyExact(a) => run(Pipeline::Alg2, a.key_values(Pipeline::Alg2)?),
        Command::CertifyEst(a) => run(Pipeline::Alg3, a.key_values(Pipeline::Alg3)?),
        Command::CertifyOnline { cert, requests } => {
            let mut kv = cert.key_values(Pipeline::Alg4)?;
            if let Some(r) = requests {
                kv.set("forget.requests", r.to_string());
            }
            run(Pipeline::Alg4, kv)
        }
        Command::Baseline {
            run: a,
            kind,
            samples,
            radius,
            variance,
        } => {
            let pipeline = match kind {
                BaselineKind::Retrain => Pipeline::Retrain,
                BaselineKind::Synthetic => Pipeline::Synthetic,
                BaselineKind::GaussianUniform => Pipeline::GaussianUniform,
            };
            let mut kv = a.key_values(pipeline)?;
            for (k, v) in [
                ("baseline.samples", samples.map(|v| v.to_string())),
                ("baseline.radius", radius.map(|v| v.to_string())),
                ("baseline.variance", variance.map(|v| v.to_string())),
            ] {
                if let Some(v) = v {
                    kv.set(k, v);
                }
            }
            run(pipeline, kv)
        }
        Command::Attack {
            run: a,
            run_dir,
            kind,
            gamma,
            steps,
            step_size,
            alpha,
            no_clamp,
        } => {
            let cfg = a.config(Pipeline::Pretrain)?;
            let mut attack = AttackConfig::new(gamma);
            attack.steps = steps.unwrap_or(attack.steps);
            attack.step_size = step_size.unwrap_or(attack.step_size);
            attack.alpha = alpha.unwrap_or(attack.alpha);
            attack.clamp_unit_box = !no_clamp;
            attack.validate()?;
            let row = experiment::run_attack(&cfg, &run_dir, kind, &attack)?;
            print_rows(
                &format!("{} attack on {}", kind.name(), run_dir.display()),
                &[row],
            );
            Ok(())
        }
        Command::Bounds(b) => bounds(&b),
        Command::Report { runs } => report(&runs),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
