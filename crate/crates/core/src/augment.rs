//! Seeded stochastic transformations that produce the augmented view of a
//! batch.
//!
//! Randomness is counter based: each sample draws from a ChaCha stream keyed
//! by `(seed, step, view, sample id)`, so a sample's augmentation does not
//! depend on which other samples share its batch or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    GaussianNoise,
    FeatureDropout,
    ImageBasic,
}

impl std::str::FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_noise" => Ok(AugmentKind::GaussianNoise),
            "feature_dropout" => Ok(AugmentKind::FeatureDropout),
            "image_basic" => Ok(AugmentKind::ImageBasic),
            other => Err(Error::Parameter(format!(
                "unknown augmentation kind {other:?} (gaussian_noise, feature_dropout, image_basic)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    /// Noise standard deviation in feature units.
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    pub flip_prob: f64,
    /// Reflect padding (pixels) before the random crop.
    pub crop_padding: usize,
    pub jitter_strength: f64,
    /// Channel count for `image_basic`; rows are channel-major square images.
    pub channels: usize,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            kind: AugmentKind::GaussianNoise,
            noise_sigma: 0.5,
            dropout_prob: 0.0,
            flip_prob: 0.0,
            crop_padding: 0,
            jitter_strength: 0.0,
            channels: 3,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn gaussian(noise_sigma: f64, seed: u64) -> Self {
        AugmentSpec {
            noise_sigma,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )))
            }
        };
        unit("dropout_prob", self.dropout_prob)?;
        unit("flip_prob", self.flip_prob)?;
        unit("jitter_strength", self.jitter_strength)?;
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.channels == 0 {
            return Err(Error::Parameter("channels must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self, step: u64, view: u64, id: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        for (chunk, word) in key.chunks_mut(8).zip([self.seed, step, view, id]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Side length of the square images packed into rows of width `d`.
    fn image_side(&self, d: usize) -> Result<usize> {
        let err = || Error::dim("image_basic", &[d], &[self.channels, 0, 0]);
        if !d.is_multiple_of(self.channels) {
            return Err(err());
        }
        let plane = d / self.channels;
        let side = (plane as f64).sqrt().round() as usize;
        if side * side != plane {
            return Err(err());
        }
        if self.crop_padding >= side {
            return Err(Error::Parameter(format!(
                "crop_padding {} must be smaller than the image side {side}",
                self.crop_padding
            )));
        }
        Ok(side)
    }
}

/// Augments every row of `x`, keying row `i` by sample id `i`.
pub fn augment_batch(x: &Tensor, spec: &AugmentSpec, step: u64) -> Result<Tensor> {
    let ids: Vec<u64> = (0..x.rows() as u64).collect();
    augment_rows(x, spec, step, 0, &ids)
}

/// Augments row `r` of `x` with the stream keyed by `(step, view, ids[r])`.
pub fn augment_rows(
    x: &Tensor,
    spec: &AugmentSpec,
    step: u64,
    view: u64,
    ids: &[u64],
) -> Result<Tensor> {
    spec.validate()?;
    if ids.len() != x.rows() {
        return Err(Error::dim("augment_rows", &[ids.len()], x.shape()));
    }
    let d = x.cols();
    let side = match spec.kind {
        AugmentKind::ImageBasic => spec.image_side(d)?,
        _ => 0,
    };
    let mut out = x.clone();
    for (row, &id) in out.data_mut().chunks_mut(d).zip(ids) {
        let mut rng = spec.rng(step, view, id);
        match spec.kind {
            AugmentKind::GaussianNoise => {
                for v in row.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.noise_sigma * e;
                }
            }
            AugmentKind::FeatureDropout => {
                let keep = 1.0 - spec.dropout_prob;
                for v in row.iter_mut() {
                    let u: f64 = rng.random();
                    *v = if u < spec.dropout_prob || keep == 0.0 {
                        0.0
                    } else {
                        *v / keep
                    };
                }
            }
            AugmentKind::ImageBasic => image_basic(row, side, spec, &mut rng),
        }
    }
    Ok(out)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

fn image_basic(row: &mut [f64], side: usize, spec: &AugmentSpec, rng: &mut ChaCha8Rng) {
    let flip = rng.random::<f64>() < spec.flip_prob;
    let pad = spec.crop_padding as i64;
    let (dy, dx) = if pad > 0 {
        (
            rng.random_range(-pad..=pad) as isize,
            rng.random_range(-pad..=pad) as isize,
        )
    } else {
        (0, 0)
    };
    let scales: Vec<f64> = (0..spec.channels)
        .map(|_| {
            if spec.jitter_strength > 0.0 {
                rng.random_range(1.0 - spec.jitter_strength..=1.0 + spec.jitter_strength)
            } else {
                1.0
            }
        })
        .collect();
    if !flip && dy == 0 && dx == 0 && scales.iter().all(|&s| s == 1.0) {
        return;
    }
    let src = row.to_vec();
    let plane = side * side;
    for (c, &scale) in scales.iter().enumerate() {
        for y in 0..side {
            for x in 0..side {
                let sy = reflect(y as isize + dy, side);
                let mut sx = reflect(x as isize + dx, side);
                if flip {
                    sx = side - 1 - sx;
                }
                row[c * plane + y * side + x] = scale * src[c * plane + sy * side + sx];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|i| i as f64 * 0.37 - 3.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let x = sample(4, 12);
        for kind in [
            AugmentKind::GaussianNoise,
            AugmentKind::FeatureDropout,
            AugmentKind::ImageBasic,
        ] {
            let spec = AugmentSpec {
                kind,
                noise_sigma: 0.0,
                ..Default::default()
            };
            assert_eq!(augment_batch(&x, &spec, 5).unwrap(), x, "{kind:?}");
        }
    }

    #[test]
    fn same_key_same_output() {
        let x = sample(3, 8);
        let spec = AugmentSpec::gaussian(0.7, 42);
        assert_eq!(
            augment_batch(&x, &spec, 1).unwrap(),
            augment_batch(&x, &spec, 1).unwrap()
        );
        assert_ne!(
            augment_batch(&x, &spec, 1).unwrap(),
            augment_batch(&x, &spec, 2).unwrap()
        );
    }

    #[test]
    fn independent_of_batch_composition() {
        let x = sample(5, 4);
        let spec = AugmentSpec::gaussian(1.0, 3);
        let full = augment_rows(&x, &spec, 9, 0, &[10, 11, 12, 13, 14]).unwrap();
        let part = augment_rows(&x.select_rows(&[3, 1]), &spec, 9, 0, &[13, 11]).unwrap();
        assert_eq!(part.row(0), full.row(3));
        assert_eq!(part.row(1), full.row(1));
    }

    #[test]
    fn noise_mean_is_zero() {
        let n = 100_000;
        let sigma = 0.5;
        let x = Tensor::zeros(n, 1);
        let spec = AugmentSpec::gaussian(sigma, 1);
        let y = augment_batch(&x, &spec, 0).unwrap();
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn dropout_preserves_expectation() {
        let n = 100_000;
        let x = Tensor::ones(n, 1);
        let spec = AugmentSpec {
            kind: AugmentKind::FeatureDropout,
            dropout_prob: 0.3,
            ..Default::default()
        };
        let y = augment_batch(&x, &spec, 0).unwrap();
        let mean = y.data().iter().sum::<f64>() / n as f64;
        // std of a single draw is sqrt(p/(1-p)) ~ 0.65
        assert!(
            (mean - 1.0).abs() < 4.0 * 0.66 / (n as f64).sqrt(),
            "mean {mean}"
        );
        assert!(y
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-12));
    }

    #[test]
    fn image_flip_reverses_columns() {
        // 1 channel, 2x2
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let spec = AugmentSpec {
            kind: AugmentKind::ImageBasic,
            flip_prob: 1.0,
            channels: 1,
            ..Default::default()
        };
        let y = augment_batch(&x, &spec, 0).unwrap();
        assert_eq!(y.data(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn image_crop_keeps_values_from_source() {
        let x = sample(2, 3 * 16);
        let spec = AugmentSpec {
            kind: AugmentKind::ImageBasic,
            crop_padding: 2,
            channels: 3,
            ..Default::default()
        };
        let y = augment_batch(&x, &spec, 4).unwrap();
        for (yr, xr) in y.row_iter().zip(x.row_iter()) {
            for c in 0..3 {
                let plane = &xr[c * 16..(c + 1) * 16];
                assert!(yr[c * 16..(c + 1) * 16].iter().all(|v| plane.contains(v)));
            }
        }
    }

    #[test]
    fn image_shape_must_factor() {
        let spec = AugmentSpec {
            kind: AugmentKind::ImageBasic,
            channels: 3,
            ..Default::default()
        };
        assert!(matches!(
            augment_batch(&Tensor::zeros(1, 10), &spec, 0),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            augment_batch(&Tensor::zeros(1, 3 * 15), &spec, 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn invalid_specs_rejected() {
        let x = Tensor::zeros(1, 4);
        for spec in [
            AugmentSpec {
                dropout_prob: 1.5,
                ..Default::default()
            },
            AugmentSpec {
                noise_sigma: -1.0,
                ..Default::default()
            },
            AugmentSpec {
                flip_prob: -0.1,
                ..Default::default()
            },
        ] {
            assert!(augment_batch(&x, &spec, 0).is_err());
        }
    }
}
