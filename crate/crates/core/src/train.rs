//! Minibatch training: shuffle, augment, evaluate the three losses, take an
//! Adam step, and record per-epoch losses and metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::augment::{augment_rows, AugmentSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{total_loss, Ablation, LossBreakdown, LossParams};
use crate::metrics::{cluster_sizes, scores, Scores};
use crate::model::ClusterModel;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub t_af: f64,
    pub t_ap: f64,
    /// Views entering the contrast per sample: the original plus
    /// `views_per_sample - 1` augmentations, each paired with the original.
    pub views_per_sample: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub normalize_af: bool,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 4,
            lr: 1e-4,
            epochs: 500,
            batch_size: 256,
            lambda: 0.005,
            t_af: 0.5,
            t_ap: 0.95,
            views_per_sample: 2,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            normalize_af: true,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn loss_params(&self) -> LossParams {
        LossParams {
            lambda: self.lambda,
            t_af: self.t_af,
            t_ap: self.t_ap,
            normalize_af: self.normalize_af,
            ablation: self.ablation,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.k < 2 {
            out.push(format!("train.k must be >= 2, got {}", self.k));
        }
        if self.batch_size == 0 {
            out.push("train.batch_size must be positive".into());
        }
        if self.views_per_sample < 2 {
            out.push(format!(
                "train.views_per_sample must be >= 2, got {}",
                self.views_per_sample
            ));
        }
        let positive = [
            ("train.lr", self.lr),
            ("train.t_af", self.t_af),
            ("train.t_ap", self.t_ap),
            ("train.eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(format!("train.lambda must be >= 0, got {}", self.lambda));
        }
        for (name, v) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                out.push(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub losses: LossBreakdown,
    /// Present when the dataset carries labels.
    pub scores: Option<Scores>,
    pub cluster_sizes: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with columns `epoch,af,ap,cr,total,acc,nmi,ari`; absent metrics
    /// are empty cells.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "af", "ap", "cr", "total", "acc", "nmi", "ari"])?;
        for r in &self.records {
            let opt = |f: fn(&Scores) -> f64| {
                r.scores
                    .as_ref()
                    .map_or(String::new(), |s| f(s).to_string())
            };
            out.write_record([
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
        out.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }
}

/// Steps per epoch; the last incomplete batch is dropped.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n / batch_size
}

/// Scores and cluster sizes of `model` on the whole dataset.
pub fn evaluate(model: &ClusterModel, data: &Dataset) -> Result<(Option<Scores>, Vec<usize>)> {
    let pred = model.predict(&data.x)?;
    let sizes = cluster_sizes(&pred, model.k())?;
    let scores = match (&data.y, data.k_true) {
        (Some(y), Some(kt)) => Some(scores(&pred, y, kt.max(model.k()))?),
        _ => None,
    };
    Ok((scores, sizes))
}

/// Mean losses over consecutive full batches of `batch_size` rows (a single
/// batch of all rows when the dataset is smaller), each contrasted against
/// its view-1 augmentation at step 0. No parameters change.
pub fn dataset_losses(
    model: &ClusterModel,
    data: &Dataset,
    params: &LossParams,
    spec: &AugmentSpec,
    batch_size: usize,
) -> Result<LossBreakdown> {
    let bs = batch_size.clamp(1, data.len().max(1));
    let order: Vec<usize> = (0..data.len()).collect();
    let mut sum = LossBreakdown::default();
    let mut batches = 0;
    for idx in order.chunks_exact(bs) {
        let x = data.x.select_rows(idx);
        let ids: Vec<u64> = idx.iter().map(|&i| i as u64).collect();
        let xa = augment_rows(&x, spec, 0, 1, &ids)?;
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let (xv, xav) = (g.constant(x), g.constant(xa));
        let (z, p) = model.forward_graph(&mut g, &bound, xv)?;
        let (za, pa) = model.forward_graph(&mut g, &bound, xav)?;
        sum += total_loss(&mut g, z, za, p, pa, params)?.breakdown;
        batches += 1;
    }
    Ok(sum.scaled(1.0 / batches.max(1) as f64))
}

/// One optimization step on the rows `idx`; returns the loss breakdown.
fn train_step(
    model: &mut ClusterModel,
    data: &Dataset,
    idx: &[usize],
    cfg: &TrainConfig,
    spec: &AugmentSpec,
    step: u64,
    adam: &mut AdamState,
) -> Result<LossBreakdown> {
    let params = cfg.loss_params();
    let x = data.x.select_rows(idx);
    let ids: Vec<u64> = idx.iter().map(|&i| i as u64).collect();

    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let xv = g.constant(x.clone());
    let (z, p) = model.forward_graph(&mut g, &bound, xv)?;

    let pairs = cfg.views_per_sample - 1;
    let mut root = None;
    let mut sum = LossBreakdown::default();
    for view in 1..=pairs as u64 {
        let xa = g.constant(augment_rows(&x, spec, step, view, &ids)?);
        let (za, pa) = model.forward_graph(&mut g, &bound, xa)?;
        let obj = total_loss(&mut g, z, za, p, pa, &params)?;
        sum += obj.breakdown;
        root = Some(match root {
            None => obj.total,
            Some(r) => g.add(r, obj.total)?,
        });
    }
    let root = g.scale(root.expect("at least one pair"), 1.0 / pairs as f64);
    g.backward(root)?;

    let mut grads = Vec::with_capacity(bound.params.len() * 2);
    for &(w, b) in &bound.params {
        for v in [w, b] {
            let grad = g
                .grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(g.value(v).rows(), g.value(v).cols()));
            grads.push(grad);
        }
    }
    let mut tensors: Vec<&mut Tensor> = model
        .layers_mut()
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect();
    adam_step(&mut tensors, &grads, adam, &cfg.adam())?;
    Ok(sum.scaled(1.0 / pairs as f64))
}

/// Trains `model` in place and returns the per-epoch history.
///
/// Aborts with [`Error::Contract`] naming the epoch and batch if a loss or
/// parameter stops being finite.
pub fn train(
    model: &mut ClusterModel,
    data: &Dataset,
    cfg: &TrainConfig,
    spec: &AugmentSpec,
) -> Result<TrainHistory> {
    train_with(model, data, cfg, spec, |_| {})
}

/// [`train`] with a callback after each epoch.
pub fn train_with(
    model: &mut ClusterModel,
    data: &Dataset,
    cfg: &TrainConfig,
    spec: &AugmentSpec,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    let mut problems = cfg.problems();
    if data.is_empty() {
        problems.push("dataset is empty".into());
    } else if cfg.batch_size > data.len() {
        problems.push(format!(
            "train.batch_size {} exceeds dataset size {}",
            cfg.batch_size,
            data.len()
        ));
    }
    if model.k() != cfg.k {
        problems.push(format!(
            "model head width {} != train.k {}",
            model.k(),
            cfg.k
        ));
    }
    if model.input_dim() != data.dim() {
        problems.push(format!(
            "model input width {} != dataset dimension {}",
            model.input_dim(),
            data.dim()
        ));
    }
    if !problems.is_empty() {
        return Err(Error::Parameter(problems.join("; ")));
    }
    spec.validate()?;

    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(
        model
            .layers()
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()]),
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let steps = steps_per_epoch(data.len(), cfg.batch_size);
    let mut global_step = 0u64;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for (batch, idx) in order.chunks_exact(cfg.batch_size).enumerate() {
            let losses = train_step(model, data, idx, cfg, spec, global_step, &mut adam).map_err(
                |e| match e {
                    Error::Contract(_) | Error::Domain { .. } | Error::Degenerate { .. } => {
                        Error::Contract(format!("epoch {epoch}, batch {batch}: {e}"))
                    }
                    other => other,
                },
            )?;
            global_step += 1;
            let finite = losses.total.is_finite()
                && model
                    .layers()
                    .iter()
                    .all(|l| l.weight.is_finite() && l.bias.is_finite());
            if !finite {
                return Err(Error::Contract(format!(
                    "epoch {epoch}, batch {batch}: non-finite loss or parameters (total = {})",
                    losses.total
                )));
            }
            sum += losses;
        }
        let (scores, cluster_sizes) = evaluate(model, data)?;
        let record = EpochRecord {
            epoch,
            losses: sum.scaled(1.0 / steps as f64),
            scores,
            cluster_sizes,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok(history)
}
