//! Multi-trial runs: one training per seed, then per-trial and mean/best
//! summaries in the shape written to `metrics.json`.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::losses::LossBreakdown;
use crate::metrics::{max_cluster_share, Scores};
use crate::model::ClusterModel;
use crate::train::{train_with, EpochRecord, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    /// Absent when the dataset has no labels.
    pub scores: Option<Scores>,
    /// Mean losses over the last epoch; absent when no epoch ran.
    pub final_loss: Option<LossBreakdown>,
    pub cluster_sizes: Vec<usize>,
    pub max_cluster_share: f64,
}

/// The `metrics.json` document of a `train` run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub trials: Vec<TrialSummary>,
    /// Mean of each score over trials.
    pub mean: Option<Scores>,
    /// Maximum of each score over trials, taken per score.
    pub best: Option<Scores>,
    /// Trial whose model is exported: highest ACC, or lowest final loss
    /// without labels; ties go to the earlier trial.
    pub selected_trial: usize,
}

pub struct TrialOutcome {
    pub model: ClusterModel,
    pub history: TrainHistory,
    pub summary: TrialSummary,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub outcomes: Vec<TrialOutcome>,
}

impl RunOutcome {
    pub fn selected(&self) -> &TrialOutcome {
        &self.outcomes[self.report.selected_trial]
    }
}

/// Trains one model from scratch for trial `t`.
pub fn run_trial(
    cfg: &RunConfig,
    data: &Dataset,
    t: usize,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrialOutcome> {
    let train_cfg = cfg.train_for(t);
    let spec = cfg.augment_for(t, data);
    let mut model = ClusterModel::init(&cfg.layer_sizes(data.dim()), train_cfg.seed)?;
    let history = train_with(&mut model, data, &train_cfg, &spec, on_epoch)?;
    let (scores, cluster_sizes) = match history.last() {
        Some(r) => (r.scores, r.cluster_sizes.clone()),
        None => crate::train::evaluate(&model, data)?,
    };
    let summary = TrialSummary {
        trial: t,
        seed: train_cfg.seed,
        scores,
        final_loss: history.last().map(|r| r.losses),
        max_cluster_share: max_cluster_share(&cluster_sizes),
        cluster_sizes,
    };
    Ok(TrialOutcome {
        model,
        history,
        summary,
    })
}

/// Runs every configured trial in sequence.
pub fn run_trials(
    cfg: &RunConfig,
    data: &Dataset,
    mut on_trial: impl FnMut(&TrialSummary),
) -> Result<RunOutcome> {
    let mut outcomes = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let o = run_trial(cfg, data, t, |_| {})?;
        on_trial(&o.summary);
        outcomes.push(o);
    }
    let summaries: Vec<TrialSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let report = summarize(data, cfg.train.k, summaries);
    Ok(RunOutcome { report, outcomes })
}

pub fn summarize(data: &Dataset, k: usize, trials: Vec<TrialSummary>) -> RunReport {
    let scored: Vec<Scores> = trials.iter().filter_map(|t| t.scores).collect();
    let (mean, best) = if scored.is_empty() || scored.len() != trials.len() {
        (None, None)
    } else {
        let n = scored.len() as f64;
        let mean = Scores {
            acc: scored.iter().map(|s| s.acc).sum::<f64>() / n,
            nmi: scored.iter().map(|s| s.nmi).sum::<f64>() / n,
            ari: scored.iter().map(|s| s.ari).sum::<f64>() / n,
        };
        let max = |f: fn(&Scores) -> f64| scored.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let best = Scores {
            acc: max(|s| s.acc),
            nmi: max(|s| s.nmi),
            ari: max(|s| s.ari),
        };
        (Some(mean), Some(best))
    };
    let key = |t: &TrialSummary| match (t.scores, t.final_loss) {
        (Some(s), _) => -s.acc,
        (None, Some(l)) => l.total,
        (None, None) => 0.0,
    };
    let selected_trial = trials
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bk), (i, t)| {
            let k = key(t);
            if k < bk {
                (i, k)
            } else {
                (bi, bk)
            }
        })
        .0;
    RunReport {
        n: data.len(),
        dim: data.dim(),
        k,
        trials,
        mean,
        best,
        selected_trial,
    }
}

/// Parsed back from `metrics.json` by downstream tools and tests.
#[derive(Clone, Debug, Deserialize)]
pub struct ReportSummary {
    pub n: usize,
    pub k: usize,
    pub mean: Option<Scores>,
    pub best: Option<Scores>,
    pub selected_trial: usize,
}
