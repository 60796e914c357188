//! Clustering evaluation: ACC under the best one-to-one relabeling, NMI
//! (geometric-mean normalization, natural logs), ARI, cluster sizes and the
//! intra/inter-class variance of assignment probabilities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hungarian::hungarian;
use crate::tensor::Tensor;

/// Counts of (predicted cluster, true class) pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[pred][truth]`
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize], k_pred: usize, k_true: usize) -> Result<Self> {
        check_lengths(pred, truth)?;
        check_range(pred, k_pred, "predicted")?;
        check_range(truth, k_true, "true")?;
        let mut counts = vec![vec![0; k_true]; k_pred];
        for (&p, &t) in pred.iter().zip(truth) {
            counts[p][t] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: pred.len(),
        })
    }

    /// Infers the label ranges from the data.
    pub fn from_labels(pred: &[usize], truth: &[usize]) -> Result<Self> {
        let kp = pred.iter().max().map_or(0, |m| m + 1);
        let kt = truth.iter().max().map_or(0, |m| m + 1);
        Self::new(pred, truth, kp, kt)
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let k = self.counts.first().map_or(0, Vec::len);
        (0..k)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::dim("labels", &[pred.len()], &[truth.len()]));
    }
    Ok(())
}

fn check_range(labels: &[usize], k: usize, what: &str) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Parameter(format!(
            "{what} label {bad} out of range [0, {k})"
        )));
    }
    Ok(())
}

/// Clustering accuracy: the fraction of samples matched after the best
/// one-to-one map from predicted clusters to classes.
pub fn acc(pred: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth, k, k)?;
    if table.n == 0 {
        return Ok(0.0);
    }
    let cost: Vec<Vec<f64>> = table
        .counts
        .iter()
        .map(|r| r.iter().map(|&c| -(c as f64)).collect())
        .collect();
    let assignment = hungarian(&cost)?;
    let hits: usize = assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| table.counts[p][t])
        .sum();
    Ok(hits as f64 / table.n as f64)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(pred; truth) / sqrt(H(pred) H(truth))`; 0 when either side has zero
/// entropy.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::from_labels(pred, truth)?;
    if t.n == 0 {
        return Ok(0.0);
    }
    let n = t.n as f64;
    let (a, b) = (t.row_sums(), t.col_sums());
    let (ha, hb) = (entropy(&a, n), entropy(&b, n));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (a[i] as f64 * b[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index; the 0/0 case (both partitions trivial) is 0.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::from_labels(pred, truth)?;
    let sum_ij: f64 = t.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = t.row_sums().into_iter().map(choose2).sum();
    let sum_b: f64 = t.col_sums().into_iter().map(choose2).sum();
    let total = choose2(t.n);
    if total == 0.0 {
        return Ok(0.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((sum_ij - expected) / denom)
}

/// Number of samples assigned to each of `k` clusters.
pub fn cluster_sizes(pred: &[usize], k: usize) -> Result<Vec<usize>> {
    check_range(pred, k, "predicted")?;
    let mut sizes = vec![0; k];
    for &p in pred {
        sizes[p] += 1;
    }
    Ok(sizes)
}

/// Largest cluster's share of the samples.
pub fn max_cluster_share(sizes: &[usize]) -> f64 {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    *sizes.iter().max().unwrap() as f64 / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    /// Mean squared distance of each class's rows to the class centroid;
    /// `None` for classes without samples.
    pub intra: Vec<Option<f64>>,
    /// Size-weighted spread of class centroids around the global centroid.
    pub inter: f64,
    /// Classes skipped for having no samples.
    pub skipped: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn variance_report(p: &Tensor, truth: &[usize], k_true: usize) -> Result<VarianceReport> {
    if p.rows() != truth.len() {
        return Err(Error::dim("variance_report", p.shape(), &[truth.len()]));
    }
    check_range(truth, k_true, "true")?;
    let k = p.cols();
    let n = p.rows() as f64;
    let mut centroids = vec![vec![0.0; k]; k_true];
    let mut counts = vec![0usize; k_true];
    let mut global = vec![0.0; k];
    for (row, &t) in p.row_iter().zip(truth) {
        counts[t] += 1;
        for j in 0..k {
            centroids[t][j] += row[j];
            global[j] += row[j];
        }
    }
    global.iter_mut().for_each(|g| *g /= n);
    for (c, &m) in centroids.iter_mut().zip(&counts) {
        if m > 0 {
            c.iter_mut().for_each(|v| *v /= m as f64);
        }
    }
    let mut intra_sum = vec![0.0; k_true];
    for (row, &t) in p.row_iter().zip(truth) {
        intra_sum[t] += sq_dist(row, &centroids[t]);
    }
    let mut skipped = Vec::new();
    let intra = (0..k_true)
        .map(|c| {
            if counts[c] == 0 {
                skipped.push(c);
                None
            } else {
                Some(intra_sum[c] / counts[c] as f64)
            }
        })
        .collect();
    let inter = (0..k_true)
        .filter(|&c| counts[c] > 0)
        .map(|c| counts[c] as f64 / n * sq_dist(&centroids[c], &global))
        .sum();
    Ok(VarianceReport {
        intra,
        inter,
        skipped,
    })
}

/// ACC / NMI / ARI bundle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn scores(pred: &[usize], truth: &[usize], k: usize) -> Result<Scores> {
    Ok(Scores {
        acc: acc(pred, truth, k)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}
