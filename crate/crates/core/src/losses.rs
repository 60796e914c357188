//! Contrastive clustering objectives.
//!
//! All losses are in minimization form: `info_nce` is the negated mean log
//! share of the positive pair in its row, so driving it down raises the
//! mutual-information lower bound checked in [`crate::mioracle`].
//!
//! * `af_loss` contrasts the N samples through their assignment features.
//! * `ap_loss` contrasts the K clusters through the columns of the
//!   assignment-probability matrix.
//! * `cr_loss` penalizes uneven cluster mass.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Per-row tolerance for the probability-simplex precondition.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Which terms of the objective take part. Disabled terms contribute 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Ablation {
    pub disable_af: bool,
    pub disable_ap: bool,
    pub disable_cr: bool,
}

/// Hyperparameters consumed by [`total_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    pub lambda: f64,
    pub t_af: f64,
    pub t_ap: f64,
    /// Row-normalize assignment features before the dot product.
    pub normalize_af: bool,
    pub ablation: Ablation,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            lambda: 0.005,
            t_af: 0.5,
            t_ap: 0.95,
            normalize_af: true,
            ablation: Ablation::default(),
        }
    }
}

/// Scalar values of each objective term.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub af: f64,
    pub ap: f64,
    pub cr: f64,
    pub total: f64,
    pub lambda: f64,
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.af += o.af;
        self.ap += o.ap;
        self.cr += o.cr;
        self.total += o.total;
        self.lambda = o.lambda;
    }
}

impl LossBreakdown {
    pub fn scaled(self, c: f64) -> Self {
        LossBreakdown {
            af: self.af * c,
            ap: self.ap * c,
            cr: self.cr * c,
            total: self.total * c,
            lambda: self.lambda,
        }
    }
}

/// The objective recorded on a graph: `total` is the backward root.
#[derive(Clone, Copy, Debug)]
pub struct Objective {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Parameter(format!(
            "temperature must be > 0, got {t}"
        )));
    }
    Ok(())
}

/// Fails unless every row of `p` lies on the probability simplex.
pub fn check_simplex(p: &Tensor, what: &str) -> Result<()> {
    for (i, row) in p.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Contract(format!(
                "{what}: row {i} is not on the probability simplex (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// `-(1/N) Σ_i log( exp(s_ii/T) / Σ_j exp(s_ij/T) )` over a square score matrix.
pub fn info_nce(g: &mut Graph, scores: Var, temperature: f64) -> Result<Var> {
    check_temperature(temperature)?;
    let shape = g.value(scores).shape().to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::dim("info_nce", &shape, &[shape[0], shape[0]]));
    }
    let n = shape[0] as f64;
    let scaled = g.scale(scores, 1.0 / temperature);
    let log_share = g.log_softmax_rows(scaled)?;
    let positives = g.diag(log_share)?;
    let total = g.sum_all(positives);
    Ok(g.scale(total, -1.0 / n))
}

/// Assignment-feature loss: samples contrasted by `s_ij = z_i · z'_j`.
pub fn af_loss(
    g: &mut Graph,
    z: Var,
    z_aug: Var,
    temperature: f64,
    normalize: bool,
) -> Result<Var> {
    if g.value(z).shape() != g.value(z_aug).shape() {
        return Err(Error::dim(
            "af_loss",
            g.value(z).shape(),
            g.value(z_aug).shape(),
        ));
    }
    check_temperature(temperature)?;
    let (a, b) = if normalize {
        (g.l2_normalize_rows(z)?, g.l2_normalize_rows(z_aug)?)
    } else {
        (z, z_aug)
    };
    let bt = g.transpose(b)?;
    let scores = g.matmul(a, bt)?;
    info_nce(g, scores, temperature)
}

/// Assignment-probability loss: clusters contrasted by `s_ij = q_i · q'_j`
/// where `q_i` is the i-th column of `p`.
pub fn ap_loss(g: &mut Graph, p: Var, p_aug: Var, temperature: f64) -> Result<Var> {
    if g.value(p).shape() != g.value(p_aug).shape() {
        return Err(Error::dim(
            "ap_loss",
            g.value(p).shape(),
            g.value(p_aug).shape(),
        ));
    }
    check_temperature(temperature)?;
    check_simplex(g.value(p), "ap_loss p")?;
    check_simplex(g.value(p_aug), "ap_loss p_aug")?;
    let pt = g.transpose(p)?;
    let scores = g.matmul(pt, p_aug)?;
    info_nce(g, scores, temperature)
}

/// Cluster regularization: `(1/N) Σ_k (Σ_j p_jk)²`, in `[N/K, N]`.
pub fn cr_loss(g: &mut Graph, p: Var) -> Result<Var> {
    check_simplex(g.value(p), "cr_loss p")?;
    let n = g.value(p).rows() as f64;
    let mass = g.sum_cols(p)?;
    let sq = g.square(mass);
    let total = g.sum_all(sq);
    Ok(g.scale(total, 1.0 / n))
}

/// `af + ap + λ·cr`, honoring the ablation switches.
pub fn total_loss(
    g: &mut Graph,
    z: Var,
    z_aug: Var,
    p: Var,
    p_aug: Var,
    params: &LossParams,
) -> Result<Objective> {
    let mut terms = Vec::with_capacity(3);
    let mut out = LossBreakdown {
        lambda: params.lambda,
        ..Default::default()
    };
    if !params.ablation.disable_af {
        let v = af_loss(g, z, z_aug, params.t_af, params.normalize_af)?;
        out.af = g.value(v).item();
        terms.push(v);
    }
    if !params.ablation.disable_ap {
        let v = ap_loss(g, p, p_aug, params.t_ap)?;
        out.ap = g.value(v).item();
        terms.push(v);
    }
    if !params.ablation.disable_cr {
        let v = cr_loss(g, p)?;
        out.cr = g.value(v).item();
        let weighted = g.scale(v, params.lambda);
        terms.push(weighted);
    }
    let total = match terms.split_first() {
        None => g.constant(Tensor::scalar(0.0)),
        Some((&first, rest)) => {
            let mut acc = first;
            for &t in rest {
                acc = g.add(acc, t)?;
            }
            acc
        }
    };
    out.total = out.af + out.ap + out.lambda * out.cr;
    Ok(Objective {
        total,
        breakdown: out,
    })
}
