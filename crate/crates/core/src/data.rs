//! Datasets: synthetic generators, the `DRCD` binary container, CSV import
//! and the CIFAR-10 binary batches.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ByteCursor;
use crate::tensor::Tensor;

pub const DRCD_MAGIC: &[u8; 4] = b"DRCD";
pub const DRCD_VERSION: u32 = 1;
/// magic + version + N + D + has_labels + k_true
pub const DRCD_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 1 + 4;

const MAX_CENTER_TRIES: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Option<Vec<usize>>,
    pub k_true: Option<usize>,
    pub name: String,
}

impl Dataset {
    pub fn new(
        x: Tensor,
        y: Option<Vec<usize>>,
        k_true: Option<usize>,
        name: impl Into<String>,
    ) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::dim("Dataset", x.shape(), &[0, 0]));
        }
        if let Some(y) = &y {
            if y.len() != x.rows() {
                return Err(Error::dim("Dataset labels", &[x.rows()], &[y.len()]));
            }
            let k = k_true
                .ok_or_else(|| Error::Parameter("labelled dataset needs a class count".into()))?;
            if let Some(bad) = y.iter().find(|&&l| l >= k) {
                return Err(Error::Parameter(format!(
                    "label {bad} out of range [0, {k})"
                )));
            }
        }
        Ok(Dataset {
            x,
            y,
            k_true,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Per-feature standard deviations (population).
    pub fn feature_stds(&self) -> Vec<f64> {
        moments(&self.x).1.into_iter().map(f64::sqrt).collect()
    }

    /// Average of the per-feature standard deviations.
    pub fn mean_feature_std(&self) -> f64 {
        let s = self.feature_stds();
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Per-feature z-scoring; constant features are only centered.
    pub fn standardized(&self) -> Dataset {
        let (means, vars) = moments(&self.x);
        let d = self.dim();
        let mut x = self.x.clone();
        for row in x.data_mut().chunks_mut(d) {
            for j in 0..d {
                let sd = vars[j].sqrt();
                row[j] -= means[j];
                if sd > 0.0 {
                    row[j] /= sd;
                }
            }
        }
        Dataset { x, ..self.clone() }
    }

    /// Keeps the listed classes (relabelled `0..classes.len()`), at most
    /// `per_class` samples each, in original order.
    pub fn class_subset(&self, classes: &[usize], per_class: usize) -> Result<Dataset> {
        let y = self
            .y
            .as_ref()
            .ok_or_else(|| Error::Parameter("class_subset needs labels".into()))?;
        let mut taken = vec![0usize; classes.len()];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in y.iter().enumerate() {
            if let Some(c) = classes.iter().position(|&c| c == l) {
                if taken[c] < per_class {
                    taken[c] += 1;
                    rows.push(i);
                    labels.push(c);
                }
            }
        }
        Dataset::new(
            self.x.select_rows(&rows),
            Some(labels),
            Some(classes.len()),
            format!("{}-subset", self.name),
        )
    }
}

fn moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; d];
    for r in x.row_iter() {
        for j in 0..d {
            mean[j] += r[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in x.row_iter() {
        for j in 0..d {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlobsSpec {
    pub k: usize,
    pub n_per: usize,
    pub d: usize,
    pub center_spread: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BlobsSpec {
    fn default() -> Self {
        BlobsSpec {
            k: 4,
            n_per: 500,
            d: 16,
            center_spread: 10.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

/// Isotropic Gaussian blobs around centers at least `6σ` apart. Samples
/// are grouped by class.
pub fn gen_blobs(spec: &BlobsSpec) -> Result<Dataset> {
    let BlobsSpec {
        k,
        n_per,
        d,
        center_spread,
        sigma,
        seed,
    } = *spec;
    if k == 0 || n_per == 0 || d == 0 {
        return Err(Error::Parameter("k, n_per and d must be positive".into()));
    }
    if !(center_spread > 0.0) || !(sigma >= 0.0) {
        return Err(Error::Parameter(
            "center_spread must be positive and sigma non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_dist = 6.0 * sigma;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut tries = 0;
    while centers.len() < k {
        tries += 1;
        if tries > MAX_CENTER_TRIES {
            return Err(Error::Geometry(format!(
                "could not place {k} centers {min_dist} apart within ±{center_spread} in {MAX_CENTER_TRIES} tries"
            )));
        }
        let c: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-center_spread..=center_spread))
            .collect();
        let far = centers.iter().all(|o| {
            o.iter()
                .zip(&c)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= min_dist
        });
        if far {
            centers.push(c);
        }
    }
    let mut data = Vec::with_capacity(k * n_per * d);
    let mut labels = Vec::with_capacity(k * n_per);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per {
            for &m in center {
                let e: f64 = StandardNormal.sample(&mut rng);
                data.push(m + sigma * e);
            }
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::matrix(k * n_per, d, data)?,
        Some(labels),
        Some(k),
        "blobs",
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingsSpec {
    pub k: usize,
    pub n_per: usize,
    pub radius_gap: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for RingsSpec {
    fn default() -> Self {
        RingsSpec {
            k: 2,
            n_per: 500,
            radius_gap: 1.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Concentric 2-D rings; ring `c` has radius `(c + 1) · radius_gap` plus
/// radial Gaussian noise.
pub fn gen_rings(spec: &RingsSpec) -> Result<Dataset> {
    let RingsSpec {
        k,
        n_per,
        radius_gap,
        noise,
        seed,
    } = *spec;
    if k == 0 || n_per == 0 || !(radius_gap > 0.0) || !(noise >= 0.0) {
        return Err(Error::Parameter(
            "rings need k, n_per, radius_gap > 0 and noise >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(k * n_per * 2);
    let mut labels = Vec::with_capacity(k * n_per);
    for c in 0..k {
        let base = (c + 1) as f64 * radius_gap;
        for _ in 0..n_per {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let e: f64 = StandardNormal.sample(&mut rng);
            let r = base + noise * e;
            data.push(r * theta.cos());
            data.push(r * theta.sin());
            labels.push(c);
        }
    }
    Dataset::new(
        Tensor::matrix(k * n_per, 2, data)?,
        Some(labels),
        Some(k),
        "rings",
    )
}

pub fn write_drcd<W: Write>(ds: &Dataset, mut w: W) -> std::io::Result<()> {
    w.write_all(DRCD_MAGIC)?;
    w.write_all(&DRCD_VERSION.to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&(ds.dim() as u64).to_le_bytes())?;
    w.write_all(&[u8::from(ds.y.is_some())])?;
    let k = if ds.y.is_some() {
        ds.k_true.unwrap_or(0)
    } else {
        0
    };
    w.write_all(&(k as u32).to_le_bytes())?;
    for v in ds.x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(y) = &ds.y {
        for &l in y {
            w.write_all(&(l as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_drcd(buf: &[u8], name: &str) -> Result<Dataset> {
    let mut cur = ByteCursor::new(buf);
    let magic = cur.take(4, "magic")?;
    if magic != DRCD_MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected \"DRCD\""),
        });
    }
    let version = cur.u32("version")?;
    if version != DRCD_VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let n = cur.u64("N")? as usize;
    let d = cur.u64("D")? as usize;
    let has_labels = match cur.u8("has_labels")? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Format {
                offset: 24,
                detail: format!("has_labels must be 0 or 1, got {other}"),
            })
        }
    };
    let k = cur.u32("k_true")? as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(8))
        .and_then(|b| b.checked_add(if has_labels { n * 4 } else { 0 }))
        .and_then(|b| b.checked_add(DRCD_HEADER_LEN))
        .ok_or_else(|| Error::Format {
            offset: 8,
            detail: "header sizes overflow".into(),
        })?;
    if buf.len() != expected {
        return Err(Error::Format {
            offset: buf.len().min(expected) as u64,
            detail: format!("expected {expected} bytes, file has {}", buf.len()),
        });
    }
    if n == 0 || d == 0 {
        return Err(Error::Format {
            offset: 8,
            detail: format!("empty dataset (N={n}, D={d})"),
        });
    }
    let x = Tensor::matrix(n, d, cur.f64s(n * d, "features")?)?;
    let (y, k_true) = if has_labels {
        let start = cur.pos;
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let l = cur.i32("label")?;
            if l < 0 || l as usize >= k {
                return Err(Error::Format {
                    offset: (start + 4 * i) as u64,
                    detail: format!("label {l} outside [0, {k})"),
                });
            }
            y.push(l as usize);
        }
        (Some(y), Some(k))
    } else {
        (None, None)
    };
    Dataset::new(x, y, k_true, name)
}

pub fn save_drcd(ds: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_drcd(ds, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_drcd(path: &Path) -> Result<Dataset> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_drcd(&buf, &name)
}

/// CSV with a header row; a final column named `label` holds class ids.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let labelled = headers
        .iter()
        .next_back()
        .is_some_and(|h| h.trim() == "label");
    let d = headers.len() - usize::from(labelled);
    if d == 0 {
        return Err(Error::Format {
            offset: 0,
            detail: "CSV has no feature columns".into(),
        });
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte());
        if rec.len() != headers.len() {
            return Err(Error::Format {
                offset,
                detail: format!(
                    "record {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    headers.len()
                ),
            });
        }
        for f in rec.iter().take(d) {
            data.push(f.trim().parse::<f64>().map_err(|e| Error::Format {
                offset,
                detail: format!("record {}: {e}", line + 1),
            })?);
        }
        if labelled {
            labels.push(rec[d].trim().parse::<usize>().map_err(|e| Error::Format {
                offset,
                detail: format!("record {} label: {e}", line + 1),
            })?);
        }
    }
    let n = data.len() / d;
    if n == 0 {
        return Err(Error::Format {
            offset: 0,
            detail: "CSV has no records".into(),
        });
    }
    let (y, k) = if labelled {
        let k = labels.iter().max().map(|m| m + 1);
        (Some(labels), k)
    } else {
        (None, None)
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(Tensor::matrix(n, d, data)?, y, k, name)
}

pub const CIFAR_RECORD_LEN: usize = 1 + 3072;
pub const CIFAR_RECORDS_PER_FILE: usize = 10_000;
pub const CIFAR_FILES: [&str; 6] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
    "test_batch.bin",
];

/// Parses one CIFAR-10 binary batch, appending to `data` / `labels`.
pub fn parse_cifar_batch(buf: &[u8], data: &mut Vec<f64>, labels: &mut Vec<usize>) -> Result<()> {
    if buf.len() != CIFAR_RECORD_LEN * CIFAR_RECORDS_PER_FILE {
        return Err(Error::Format {
            offset: buf.len() as u64,
            detail: format!(
                "expected {} records of {CIFAR_RECORD_LEN} bytes, got {} bytes",
                CIFAR_RECORDS_PER_FILE,
                buf.len()
            ),
        });
    }
    for (i, rec) in buf.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = rec[0];
        if label > 9 {
            return Err(Error::Format {
                offset: (i * CIFAR_RECORD_LEN) as u64,
                detail: format!("label byte {label} outside [0, 9]"),
            });
        }
        labels.push(label as usize);
        data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Ok(())
}

/// Train and test batches joined: 60000 × 3072 features in `[0, 1]`.
pub fn load_cifar10_binary(dir: &Path) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for f in CIFAR_FILES {
        let path = dir.join(f);
        let buf = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parse_cifar_batch(&buf, &mut data, &mut labels)?;
    }
    let n = labels.len();
    Dataset::new(
        Tensor::matrix(n, 3072, data)?,
        Some(labels),
        Some(10),
        "cifar10",
    )
}
