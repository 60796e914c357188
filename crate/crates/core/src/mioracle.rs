//! Exact mutual information over small discrete systems, and the contrastive
//! lower bound `log N + (c0/N) Σ_i log(f_ii / Σ_t f_it)` that ties it to the
//! InfoNCE loss.
//!
//! A [`DiscreteSystem`] holds a conditional `p(x'_j | x_i)` and a prior over
//! `x_i`. [`make_kernel`] builds a critic `f` that satisfies
//! `f_ij = s_i · p(x'_j|x_i) / p(x'_j)` exactly, so the per-row scale `s_i`
//! is the only freedom left.
//!
//! The bound is evaluated exactly as stated. It is *not* a valid lower bound
//! in general: an independent system has MI 0 while the bound evaluates to
//! `(1 - c0) log N`. See `bound_counterexample` in the tests.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSystem {
    /// Row-stochastic `n × n`: entry `(i, j)` is `p(x'_j | x_i)`.
    conditional: Vec<Vec<f64>>,
    prior: Vec<f64>,
}

impl DiscreteSystem {
    /// System with a uniform prior.
    pub fn new(conditional: Vec<Vec<f64>>) -> Result<Self> {
        let n = conditional.len();
        Self::with_prior(conditional, vec![1.0 / n as f64; n])
    }

    pub fn with_prior(conditional: Vec<Vec<f64>>, prior: Vec<f64>) -> Result<Self> {
        let n = conditional.len();
        if n == 0 {
            return Err(Error::Contract("system needs at least one sample".into()));
        }
        if prior.len() != n {
            return Err(Error::dim("DiscreteSystem prior", &[n], &[prior.len()]));
        }
        check_distribution(&prior, "prior")?;
        for (i, row) in conditional.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dim("DiscreteSystem", &[n, n], &[i, row.len()]));
            }
            check_distribution(row, &format!("conditional row {i}"))?;
        }
        Ok(DiscreteSystem { conditional, prior })
    }

    pub fn n(&self) -> usize {
        self.prior.len()
    }

    pub fn conditional(&self) -> &[Vec<f64>] {
        &self.conditional
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// `p(x'_j) = Σ_i prior_i p(x'_j|x_i)`.
    pub fn marginal(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|j| (0..n).map(|i| self.prior[i] * self.conditional[i][j]).sum())
            .collect()
    }

    pub fn joint(&self) -> Vec<Vec<f64>> {
        self.conditional
            .iter()
            .zip(&self.prior)
            .map(|(row, &p)| row.iter().map(|c| p * c).collect())
            .collect()
    }

    /// `min_i p(x'_i | x_i)`, the tightest admissible `c0`.
    pub fn min_diagonal(&self) -> f64 {
        (0..self.n())
            .map(|i| self.conditional[i][i])
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Contract(format!(
            "{what} is not a probability distribution (sum {sum})"
        )));
    }
    Ok(())
}

/// `Σ_ij p_ij log(p_ij / (a_i b_j))` for a joint table, with `0 log 0 = 0`.
pub fn mi_of_joint(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let k = joint.first().map_or(0, Vec::len);
    let cols: Vec<f64> = (0..k).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

pub fn mi_exact(sys: &DiscreteSystem) -> f64 {
    mi_of_joint(&sys.joint())
}

/// Critic matrix satisfying the proportionality assumption exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub f: Vec<Vec<f64>>,
    pub per_row_scale: Vec<f64>,
}

impl KernelMatrix {
    /// `log(f_ii / Σ_t f_it)` for each row.
    pub fn log_positive_shares(&self) -> Vec<f64> {
        self.f
            .iter()
            .enumerate()
            .map(|(i, row)| (row[i] / row.iter().sum::<f64>()).ln())
            .collect()
    }

    /// `-(1/n) Σ_i log(f_ii / Σ_t f_it)`.
    pub fn contrastive_loss(&self) -> f64 {
        let shares = self.log_positive_shares();
        -shares.iter().sum::<f64>() / shares.len() as f64
    }
}

/// `f_ij = scales_i · p(x'_j|x_i) / p(x'_j)`.
pub fn make_kernel(sys: &DiscreteSystem, scales: &[f64]) -> Result<KernelMatrix> {
    let n = sys.n();
    if scales.len() != n {
        return Err(Error::dim("make_kernel", &[n], &[scales.len()]));
    }
    if let Some(bad) = scales.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Parameter(format!(
            "kernel scale must be > 0, got {bad}"
        )));
    }
    let marginal = sys.marginal();
    if let Some(j) = marginal.iter().position(|&m| m <= 0.0) {
        return Err(Error::Degenerate {
            op: "make_kernel",
            detail: format!("outcome {j} has zero marginal probability"),
        });
    }
    let f = sys
        .conditional
        .iter()
        .zip(scales)
        .map(|(row, &s)| row.iter().zip(&marginal).map(|(c, m)| s * c / m).collect())
        .collect();
    Ok(KernelMatrix {
        f,
        per_row_scale: scales.to_vec(),
    })
}

/// `log N + (c0/N) Σ_i log(f_ii / Σ_t f_it)`.
///
/// Requires `0 < c0 <= min_i p(x'_i|x_i)`.
pub fn contrastive_bound(sys: &DiscreteSystem, kernel: &KernelMatrix, c0: f64) -> Result<f64> {
    let n = sys.n();
    if kernel.f.len() != n {
        return Err(Error::dim("contrastive_bound", &[n], &[kernel.f.len()]));
    }
    let min_diag = sys.min_diagonal();
    if min_diag <= 0.0 {
        return Err(Error::Contract(
            "a diagonal conditional is zero; no admissible c0 exists".into(),
        ));
    }
    if !(c0 > 0.0) || c0 > min_diag {
        return Err(Error::Contract(format!(
            "c0 = {c0} must satisfy 0 < c0 <= min_i p(x'_i|x_i) = {min_diag}"
        )));
    }
    Ok((n as f64).ln() - c0 * kernel.contrastive_loss())
}

/// The contrastive loss of `kernel` and the bound it implies with
/// `c0 = min_i p(x'_i|x_i)`: `bound = log n - c0 · loss`.
pub fn bound_vs_loss(sys: &DiscreteSystem, kernel: &KernelMatrix) -> Result<(f64, f64)> {
    let c0 = sys.min_diagonal();
    let bound = contrastive_bound(sys, kernel, c0)?;
    Ok((kernel.contrastive_loss(), bound))
}

/// One row of a randomized bound check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub n: usize,
    pub mi: f64,
    pub bound: f64,
    pub gap: f64,
}

/// Random system with `1 <= n <= n_max`: each conditional row is a mixture
/// `a · e_i + (1 - a) · Dirichlet(1)` with `a ~ U(0, 1)`, uniform prior.
pub fn random_system<R: Rng>(rng: &mut R, n_max: usize) -> DiscreteSystem {
    let n = rng.random_range(1..=n_max.max(1));
    let conditional = (0..n)
        .map(|i| {
            let a: f64 = rng.random();
            let mut row: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v = (1.0 - a) * *v / s);
            row[i] += a;
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();
    DiscreteSystem::new(conditional).expect("normalized rows")
}

/// MI, bound and gap for one system with unit scales and the tightest c0.
pub fn check_system(sys: &DiscreteSystem) -> Result<BoundCheck> {
    let kernel = make_kernel(sys, &vec![1.0; sys.n()])?;
    let (_, bound) = bound_vs_loss(sys, &kernel)?;
    let mi = mi_exact(sys);
    Ok(BoundCheck {
        n: sys.n(),
        mi,
        bound,
        gap: mi - bound,
    })
}
