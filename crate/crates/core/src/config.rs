//! Run configuration: a flat `key = value` text file with section prefixes.
//!
//! ```text
//! # comments and blank lines are ignored
//! data.generator = blobs
//! data.standardize = true
//! model.hidden = 64
//! train.k = 4
//! train.epochs = 200
//! augment.noise_sigma = 0.5
//! run.trials = 5
//! ```
//!
//! Unknown keys, duplicates, unparsable values and out-of-range values are
//! all collected and reported together as [`Error::Config`].

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::{AugmentKind, AugmentSpec};
use crate::data::{gen_blobs, gen_rings, load_csv, load_drcd, BlobsSpec, Dataset, RingsSpec};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "data.path",
    "data.generator",
    "data.standardize",
    "data.k",
    "data.n_per",
    "data.d",
    "data.center_spread",
    "data.sigma",
    "data.radius_gap",
    "data.noise",
    "data.seed",
    "model.hidden",
    "train.k",
    "train.lr",
    "train.epochs",
    "train.batch_size",
    "train.lambda",
    "train.t_af",
    "train.t_ap",
    "train.views_per_sample",
    "train.seed",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.normalize_af",
    "augment.kind",
    "augment.noise_sigma",
    "augment.dropout_prob",
    "augment.flip_prob",
    "augment.crop_padding",
    "augment.jitter_strength",
    "augment.channels",
    "augment.seed",
    "run.trials",
    "ablation.disable_af",
    "ablation.disable_ap",
    "ablation.disable_cr",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Blobs,
    Rings,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// `.drcd` binary or `.csv` text, chosen by extension.
    File(PathBuf),
    Generated(Generator),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<DataSource>,
    pub standardize: bool,
    pub blobs: BlobsSpec,
    pub rings: RingsSpec,
    /// Hidden layer widths between the input and the K-wide head.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
    /// `None` means 0.5 × the mean per-feature std of the training data.
    pub noise_sigma: Option<f64>,
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            standardize: false,
            blobs: BlobsSpec::default(),
            rings: RingsSpec::default(),
            hidden: vec![64],
            train: TrainConfig::default(),
            augment: AugmentSpec::default(),
            noise_sigma: None,
            trials: 5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| {
        format!(
            "{key}: cannot parse {value:?} as {}",
            std::any::type_name::<T>()
        )
    })
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunConfig {
    /// Parses config text; relative `data.path` values resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!(
                    "line {}: expected key = value, got {line:?}",
                    lineno + 1
                ));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                errors.push(format!("line {}: duplicate key {key}", lineno + 1));
                continue;
            }
            let value = if key == "data.path" && Path::new(value).is_relative() {
                base.join(value).to_string_lossy().into_owned()
            } else {
                value.to_string()
            };
            if let Err(e) = cfg.set(key, &value) {
                errors.push(format!("line {}: {e}", lineno + 1));
            }
        }
        errors.extend(cfg.problems());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "data.path" => self.data = Some(DataSource::File(PathBuf::from(value))),
            "data.generator" => {
                let g = match value {
                    "blobs" => Generator::Blobs,
                    "rings" => Generator::Rings,
                    other => {
                        return Err(format!("{key}: unknown generator {other:?} (blobs, rings)"))
                    }
                };
                self.data = Some(DataSource::Generated(g));
            }
            "data.standardize" => self.standardize = parse(key, value)?,
            "data.k" => {
                self.blobs.k = parse(key, value)?;
                self.rings.k = self.blobs.k;
            }
            "data.n_per" => {
                self.blobs.n_per = parse(key, value)?;
                self.rings.n_per = self.blobs.n_per;
            }
            "data.d" => self.blobs.d = parse(key, value)?,
            "data.center_spread" => self.blobs.center_spread = parse(key, value)?,
            "data.sigma" => self.blobs.sigma = parse(key, value)?,
            "data.radius_gap" => self.rings.radius_gap = parse(key, value)?,
            "data.noise" => self.rings.noise = parse(key, value)?,
            "data.seed" => {
                self.blobs.seed = parse(key, value)?;
                self.rings.seed = self.blobs.seed;
            }
            "model.hidden" => self.hidden = parse_list(key, value)?,
            "train.k" => self.train.k = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.lambda" => self.train.lambda = parse(key, value)?,
            "train.t_af" => self.train.t_af = parse(key, value)?,
            "train.t_ap" => self.train.t_ap = parse(key, value)?,
            "train.views_per_sample" => self.train.views_per_sample = parse(key, value)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "train.beta1" => self.train.beta1 = parse(key, value)?,
            "train.beta2" => self.train.beta2 = parse(key, value)?,
            "train.eps" => self.train.eps = parse(key, value)?,
            "train.normalize_af" => self.train.normalize_af = parse(key, value)?,
            "augment.kind" => {
                self.augment.kind =
                    AugmentKind::from_str(value).map_err(|e| format!("{key}: {e}"))?
            }
            "augment.noise_sigma" => self.noise_sigma = Some(parse(key, value)?),
            "augment.dropout_prob" => self.augment.dropout_prob = parse(key, value)?,
            "augment.flip_prob" => self.augment.flip_prob = parse(key, value)?,
            "augment.crop_padding" => self.augment.crop_padding = parse(key, value)?,
            "augment.jitter_strength" => self.augment.jitter_strength = parse(key, value)?,
            "augment.channels" => self.augment.channels = parse(key, value)?,
            "augment.seed" => self.augment.seed = parse(key, value)?,
            "run.trials" => self.trials = parse(key, value)?,
            "ablation.disable_af" => self.train.ablation.disable_af = parse(key, value)?,
            "ablation.disable_ap" => self.train.ablation.disable_ap = parse(key, value)?,
            "ablation.disable_cr" => self.train.ablation.disable_cr = parse(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Range and consistency problems; empty when the config is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.train.problems();
        if self.data.is_none() {
            out.push("one of data.path or data.generator is required".into());
        }
        if self.trials == 0 {
            out.push("run.trials must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            out.push(format!(
                "model.hidden widths must be positive, got {:?}",
                self.hidden
            ));
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                out.push(format!("augment.noise_sigma must be >= 0, got {s}"));
            }
        }
        let probe = AugmentSpec {
            noise_sigma: 0.0,
            ..self.augment.clone()
        };
        if let Err(e) = probe.validate() {
            out.push(format!("augment: {e}"));
        }
        out
    }

    /// Loads or generates the dataset, standardized if requested.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let data = match &self.data {
            None => return Err(Error::Config(vec!["no data source configured".into()])),
            Some(DataSource::Generated(Generator::Blobs)) => gen_blobs(&self.blobs)?,
            Some(DataSource::Generated(Generator::Rings)) => gen_rings(&self.rings)?,
            Some(DataSource::File(p)) => match p.extension().and_then(|e| e.to_str()) {
                Some("csv") => load_csv(p)?,
                _ => load_drcd(p)?,
            },
        };
        Ok(if self.standardize {
            data.standardized()
        } else {
            data
        })
    }

    /// `[input, hidden.., k]`.
    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.train.k);
        sizes
    }

    /// Seed of trial `t` (0-based): `train.seed + t`. It seeds model init and
    /// shuffling; augmentation uses `augment.seed + t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.train.seed.wrapping_add(t as u64)
    }

    pub fn train_for(&self, t: usize) -> TrainConfig {
        TrainConfig {
            seed: self.trial_seed(t),
            ..self.train.clone()
        }
    }

    pub fn augment_for(&self, t: usize, data: &Dataset) -> AugmentSpec {
        AugmentSpec {
            noise_sigma: self
                .noise_sigma
                .unwrap_or_else(|| 0.5 * data.mean_feature_std()),
            seed: self.augment.seed.wrapping_add(t as u64),
            ..self.augment.clone()
        }
    }
}
