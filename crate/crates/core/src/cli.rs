//! The `drc` command line: `gen-data`, `train`, `eval`, `ablate` and
//! `check-bound`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error, 3 invariant
//! violation (non-finite training state, broken contracts, or a failed
//! bound check).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::AugmentSpec;
use crate::config::RunConfig;
use crate::data::{
    gen_blobs, gen_rings, load_csv, load_drcd, save_drcd, BlobsSpec, Dataset, RingsSpec,
};
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossParams};
use crate::metrics::{max_cluster_share, variance_report, Scores, VarianceReport};
use crate::mioracle::{check_system, random_system};
use crate::model::ClusterModel;
use crate::runner::{run_trials, RunOutcome};
use crate::train::{dataset_losses, evaluate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Gap below which `check-bound` counts a violation.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "drc", version, about = "Contrastive clustering toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset as a DRCD file.
    GenData(GenDataArgs),
    /// Train `run.trials` models and write metrics, history, model and embeddings.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset.
    Eval(EvalArgs),
    /// Repeat training over values of one config key; one CSV row per value.
    Ablate(AblateArgs),
    /// Compare exact mutual information with the contrastive lower bound on
    /// random discrete systems.
    CheckBound(CheckBoundArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Blobs,
    Rings,
}

#[derive(clap::Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_per: Option<usize>,
    /// Blobs only.
    #[arg(long)]
    pub d: Option<usize>,
    /// Blobs only.
    #[arg(long)]
    pub center_spread: Option<f64>,
    /// Blobs only.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Rings only.
    #[arg(long)]
    pub radius_gap: Option<f64>,
    /// Rings only.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblateTerm {
    DisableAf,
    DisableAp,
    DisableCr,
}

#[derive(clap::Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Switch off a loss term (repeatable); overrides the config.
    #[arg(long, value_enum)]
    pub ablate: Vec<AblateTerm>,
    /// Print one line per trial to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// DRCD or CSV dataset.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub data: Option<PathBuf>,
    /// Rebuild the dataset exactly as a `train` config does.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Z-score features of `--data` before evaluation.
    #[arg(long)]
    pub standardize: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
}

#[derive(clap::Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key=v1,v2,...` using any config key.
    #[arg(long)]
    pub sweep: String,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
pub struct CheckBoundArgs {
    #[arg(long, default_value_t = 1000)]
    pub systems: usize,
    #[arg(long, default_value_t = 6)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Contract(_) | Error::Domain { .. } | Error::Degenerate { .. } => EXIT_INVARIANT,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::CheckBound(a) => check_bound_cmd(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<i32> {
    let ds = match a.kind {
        Kind::Blobs => {
            let d = BlobsSpec::default();
            gen_blobs(&BlobsSpec {
                k: a.k.unwrap_or(d.k),
                n_per: a.n_per.unwrap_or(d.n_per),
                d: a.d.unwrap_or(d.d),
                center_spread: a.center_spread.unwrap_or(d.center_spread),
                sigma: a.sigma.unwrap_or(d.sigma),
                seed: a.seed,
            })?
        }
        Kind::Rings => {
            let d = RingsSpec::default();
            gen_rings(&RingsSpec {
                k: a.k.unwrap_or(d.k),
                n_per: a.n_per.unwrap_or(d.n_per),
                radius_gap: a.radius_gap.unwrap_or(d.radius_gap),
                noise: a.noise.unwrap_or(d.noise),
                seed: a.seed,
            })?
        }
    };
    save_drcd(&ds, &a.out)?;
    println!("N={} D={} k={}", ds.len(), ds.dim(), ds.k_true.unwrap_or(0));
    Ok(EXIT_OK)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn load_config(path: &Path, ablate: &[AblateTerm]) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    for t in ablate {
        match t {
            AblateTerm::DisableAf => cfg.train.ablation.disable_af = true,
            AblateTerm::DisableAp => cfg.train.ablation.disable_ap = true,
            AblateTerm::DisableCr => cfg.train.ablation.disable_cr = true,
        }
    }
    Ok(cfg)
}

fn fmt_scores(s: Option<Scores>) -> String {
    s.map_or("unlabeled".into(), |s| {
        format!("acc={:.4} nmi={:.4} ari={:.4}", s.acc, s.nmi, s.ari)
    })
}

fn train_cmd(a: TrainArgs) -> Result<i32> {
    let cfg = load_config(&a.config, &a.ablate)?;
    let data = cfg.load_dataset()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let verbose = a.verbose;
    let outcome = run_trials(&cfg, &data, |t| {
        if verbose {
            eprintln!(
                "trial {} (seed {}): {}",
                t.trial,
                t.seed,
                fmt_scores(t.scores)
            );
        }
    })?;
    write_outputs(&a.out, &outcome, &data)?;
    println!(
        "trials={} mean: {} best: {}",
        outcome.report.trials.len(),
        fmt_scores(outcome.report.mean),
        fmt_scores(outcome.report.best)
    );
    Ok(EXIT_OK)
}

fn write_outputs(dir: &Path, outcome: &RunOutcome, data: &Dataset) -> Result<()> {
    write_file(&dir.join("metrics.json"), &to_json(&outcome.report)?)?;

    let history_path = dir.join("history.csv");
    let mut w = csv::Writer::from_path(&history_path)?;
    w.write_record([
        "trial", "epoch", "af", "ap", "cr", "total", "acc", "nmi", "ari",
    ])?;
    for o in &outcome.outcomes {
        for r in &o.history.records {
            let opt = |f: fn(&Scores) -> f64| r.scores.map_or(String::new(), |s| f(&s).to_string());
            w.write_record([
                o.summary.trial.to_string(),
                r.epoch.to_string(),
                r.losses.af.to_string(),
                r.losses.ap.to_string(),
                r.losses.cr.to_string(),
                r.losses.total.to_string(),
                opt(|s| s.acc),
                opt(|s| s.nmi),
                opt(|s| s.ari),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&history_path, e))?;

    let selected = outcome.selected();
    selected.model.save(&dir.join("model.drcm"))?;
    write_embeddings(&dir.join("embeddings.csv"), &selected.model, data)
}

/// One row per sample: `z0..`, `p0..`, the predicted cluster and the label
/// (empty when unlabeled).
fn write_embeddings(path: &Path, model: &ClusterModel, data: &Dataset) -> Result<()> {
    let (z, p) = model.forward(&data.x)?;
    let pred = p.argmax_rows();
    let k = model.k();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..k).map(|j| format!("z{j}")).collect();
    header.extend((0..k).map(|j| format!("p{j}")));
    header.extend(["pred".to_string(), "label".to_string()]);
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row: Vec<String> = z.row(i).iter().map(f64::to_string).collect();
        row.extend(p.row(i).iter().map(f64::to_string));
        row.push(pred[i].to_string());
        row.push(data.y.as_ref().map_or(String::new(), |y| y[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The JSON document printed by `eval`.
#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub k: usize,
    /// Absent for unlabeled data.
    pub scores: Option<Scores>,
    pub cluster_sizes: Vec<usize>,
    pub max_cluster_share: f64,
    pub losses: LossBreakdown,
    /// Absent for unlabeled data.
    pub variance: Option<VarianceReport>,
}

fn eval_cmd(a: EvalArgs) -> Result<i32> {
    let model = ClusterModel::load(&a.model)?;
    let (data, params) = match (&a.config, &a.data) {
        (Some(c), _) => {
            let cfg = RunConfig::from_file(c)?;
            (cfg.load_dataset()?, cfg.train.loss_params())
        }
        (None, Some(p)) => {
            let ds = match p.extension().and_then(|e| e.to_str()) {
                Some("csv") => load_csv(p)?,
                _ => load_drcd(p)?,
            };
            let ds = if a.standardize { ds.standardized() } else { ds };
            (ds, LossParams::default())
        }
        (None, None) => unreachable!("clap requires --data or --config"),
    };
    if data.dim() != model.input_dim() {
        return Err(Error::Config(vec![format!(
            "dimension mismatch: model expects {} input features, dataset {} has {}",
            model.input_dim(),
            data.name,
            data.dim()
        )]));
    }
    let (scores, cluster_sizes) = evaluate(&model, &data)?;
    let spec = AugmentSpec::gaussian(0.5 * data.mean_feature_std(), 0);
    let losses = dataset_losses(&model, &data, &params, &spec, a.batch_size)?;
    let variance = match (&data.y, data.k_true) {
        (Some(y), Some(kt)) => {
            let (_, p) = model.forward(&data.x)?;
            Some(variance_report(&p, y, kt)?)
        }
        _ => None,
    };
    let report = EvalReport {
        n: data.len(),
        k: model.k(),
        scores,
        max_cluster_share: max_cluster_share(&cluster_sizes),
        cluster_sizes,
        losses,
        variance,
    };
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(EXIT_OK)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Splits `key=v1,v2,...`.
pub fn parse_sweep(s: &str) -> Result<(String, Vec<String>)> {
    let bad = |m: &str| Error::Config(vec![format!("--sweep {s:?}: {m}")]);
    let (key, values) = s
        .split_once('=')
        .ok_or_else(|| bad("expected key=v1,v2,..."))?;
    let key = key.trim();
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.is_empty() || values.iter().any(String::is_empty) {
        return Err(bad("empty key or value"));
    }
    Ok((key.to_string(), values))
}

fn ablate_cmd(a: AblateArgs) -> Result<i32> {
    let base = RunConfig::from_file(&a.config)?;
    let (key, values) = parse_sweep(&a.sweep)?;
    let mut configs = Vec::with_capacity(values.len());
    let mut errors = Vec::new();
    for v in &values {
        let mut cfg = base.clone();
        match cfg.set(&key, v) {
            Err(e) => errors.push(e),
            Ok(()) => errors.extend(
                cfg.problems()
                    .into_iter()
                    .map(|p| format!("{key}={v}: {p}")),
            ),
        }
        configs.push(cfg);
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "key",
            "value",
            "trials",
            "acc_mean",
            "nmi_mean",
            "ari_mean",
            "acc_best",
            "max_share_mean",
            "total_loss_mean",
        ])?;
        for (v, cfg) in values.iter().zip(&configs) {
            let data = cfg.load_dataset()?;
            let r = run_trials(cfg, &data, |_| {})?.report;
            let n = r.trials.len() as f64;
            let share = r.trials.iter().map(|t| t.max_cluster_share).sum::<f64>() / n;
            let loss = r
                .trials
                .iter()
                .filter_map(|t| t.final_loss.map(|l| l.total))
                .sum::<f64>()
                / n;
            let cell = |s: Option<f64>| s.map_or(String::new(), |v| v.to_string());
            w.write_record([
                key.clone(),
                v.clone(),
                r.trials.len().to_string(),
                cell(r.mean.map(|s| s.acc)),
                cell(r.mean.map(|s| s.nmi)),
                cell(r.mean.map(|s| s.ari)),
                cell(r.best.map(|s| s.acc)),
                share.to_string(),
                loss.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<ablate>", e))?;
    }
    emit(a.out.as_deref(), &buf)?;
    Ok(EXIT_OK)
}

fn check_bound_cmd(a: CheckBoundArgs) -> Result<i32> {
    if a.n_max == 0 || a.systems == 0 {
        return Err(Error::Config(vec![
            "--systems and --n-max must be positive".into(),
        ]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut buf = Vec::new();
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["system", "n", "mi", "bound", "gap"])?;
        for i in 0..a.systems {
            let sys = random_system(&mut rng, a.n_max);
            let c = check_system(&sys)?;
            if c.gap < -BOUND_TOLERANCE {
                violations += 1;
            }
            worst = worst.min(c.gap);
            w.write_record([
                i.to_string(),
                c.n.to_string(),
                c.mi.to_string(),
                c.bound.to_string(),
                c.gap.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<check-bound>", e))?;
    }
    emit(a.out.as_deref(), &buf)?;
    eprintln!(
        "{}: {violations}/{} systems below the bound (worst gap {worst:.6})",
        if violations == 0 { "PASS" } else { "FAIL" },
        a.systems
    );
    Ok(if violations == 0 {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    })
}
