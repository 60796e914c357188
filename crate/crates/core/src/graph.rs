//! Reverse-mode differentiation over a recorded tape.
//!
//! Every operation appends a node to the [`Graph`] and returns a [`Var`]
//! handle. Nodes are stored in execution order, so the tape is already
//! topologically sorted; [`Graph::backward`] walks it once in reverse.
//!
//! Shapes are explicit. The only broadcast is scalar times tensor
//! ([`Graph::scale`]); a bias row is added by multiplying a ones column
//! against it.
//!
//! A graph supports exactly one backward pass. Calling `backward` a second
//! time returns [`Error::Contract`]; build a fresh graph per step instead.

use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, softmax_into, Tensor};

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Square(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    Transpose(Var),
    Diag(Var),
    L2NormalizeRows(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
}

impl Op {
    fn inputs(&self) -> (Option<Var>, Option<Var>) {
        use Op::*;
        match *self {
            Leaf => (None, None),
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => (Some(a), Some(b)),
            Scale(a, _)
            | Exp(a)
            | Log(a)
            | Relu(a)
            | Square(a)
            | SumAll(a)
            | SumRows(a)
            | SumCols(a)
            | Transpose(a)
            | Diag(a)
            | L2NormalizeRows(a)
            | SoftmaxRows(a)
            | LogSoftmaxRows(a) => (Some(a), None),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient will be populated by `backward`.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the backward root with respect to `v`, if `v` requires
    /// grad and was reachable from the root.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op) -> Var {
        let rg = match op.inputs() {
            (Some(a), Some(b)) => self.requires_grad(a) || self.requires_grad(b),
            (Some(a), None) => self.requires_grad(a),
            _ => false,
        };
        self.push(value, op, rg)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::dim(op, s, &[0, 0]));
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |p, q| p + q);
        Ok(self.push_op(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |p, q| p - q);
        Ok(self.push_op(out, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |p, q| p * q);
        Ok(self.push_op(out, Op::Mul(a, b)))
    }

    /// Scalar times tensor.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push_op(out, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push_op(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self
            .value(a)
            .data()
            .iter()
            .find(|&&v| v <= 0.0 || v.is_nan())
        {
            return Err(Error::Domain {
                op: "log",
                detail: format!("input {bad} is not strictly positive"),
            });
        }
        let out = self.value(a).map(f64::ln);
        Ok(self.push_op(out, Op::Log(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push_op(out, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        self.push_op(out, Op::Square(a))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::SumAll(a))
    }

    /// `[N, K] -> [N, 1]`: each row summed.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (n, _) = self.matrix_dims("sum_rows", a)?;
        let data = self.value(a).row_iter().map(|r| r.iter().sum()).collect();
        let out = Tensor::matrix(n, 1, data)?;
        Ok(self.push_op(out, Op::SumRows(a)))
    }

    /// `[N, K] -> [1, K]`: each column summed.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (_, k) = self.matrix_dims("sum_cols", a)?;
        let mut data = vec![0.0; k];
        for r in self.value(a).row_iter() {
            for (d, &v) in data.iter_mut().zip(r) {
                *d += v;
            }
        }
        let out = Tensor::matrix(1, k, data)?;
        Ok(self.push_op(out, Op::SumCols(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.matrix_dims("transpose", a)?;
        let out = self.value(a).transpose();
        Ok(self.push_op(out, Op::Transpose(a)))
    }

    /// `[N, N] -> [N, 1]`: the main diagonal.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let (n, m) = self.matrix_dims("diag", a)?;
        if n != m {
            return Err(Error::dim("diag", &[n, m], &[n, n]));
        }
        let x = self.value(a);
        let data = (0..n).map(|i| x.get(i, i)).collect();
        let out = Tensor::matrix(n, 1, data)?;
        Ok(self.push_op(out, Op::Diag(a)))
    }

    /// Divides each row by its Euclidean norm.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims("l2_normalize_rows", a)?;
        let mut data = Vec::with_capacity(n * k);
        for (i, r) in self.value(a).row_iter().enumerate() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Degenerate {
                    op: "l2_normalize_rows",
                    detail: format!("row {i} has norm {norm}"),
                });
            }
            data.extend(r.iter().map(|v| v / norm));
        }
        let out = Tensor::matrix(n, k, data)?;
        Ok(self.push_op(out, Op::L2NormalizeRows(a)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims("softmax_rows", a)?;
        let mut data = vec![0.0; n * k];
        for (r, o) in self.value(a).row_iter().zip(data.chunks_mut(k)) {
            softmax_into(r, o);
        }
        let out = Tensor::matrix(n, k, data)?;
        Ok(self.push_op(out, Op::SoftmaxRows(a)))
    }

    /// `x_ij - log Σ_t exp(x_it)`, computed with max subtraction.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims("log_softmax_rows", a)?;
        let mut data = Vec::with_capacity(n * k);
        for r in self.value(a).row_iter() {
            let lse = log_sum_exp(r);
            data.extend(r.iter().map(|v| v - lse));
        }
        let out = Tensor::matrix(n, k, data)?;
        Ok(self.push_op(out, Op::LogSoftmaxRows(a)))
    }

    /// Populates gradients of `root` with respect to every reachable node
    /// that requires grad.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this graph; build a new graph per pass".into(),
            ));
        }
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be a scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        self.backward_done = true;

        let n = root.0 + 1;
        let mut reachable = vec![false; n];
        reachable[root.0] = true;
        for i in (0..n).rev() {
            if !reachable[i] {
                continue;
            }
            let (a, b) = self.nodes[i].op.inputs();
            for v in [a, b].into_iter().flatten() {
                reachable[v.0] = true;
            }
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len())
            .map(|i| {
                let node = &self.nodes[i];
                (i < n && reachable[i] && node.requires_grad).then(|| {
                    let mut z = node.value.clone();
                    z.data_mut().fill(0.0);
                    z
                })
            })
            .collect();
        if let Some(g) = grads[root.0].as_mut() {
            g.data_mut()[0] = 1.0;
        }

        for i in (0..n).rev() {
            let Some(up) = grads[i].take() else { continue };
            self.propagate(i, &up, &mut grads);
            grads[i] = Some(up);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let g = up.data();
        let accumulate = |grads: &mut [Option<Tensor>], v: Var, delta: &[f64]| {
            if let Some(t) = grads[v.0].as_mut() {
                for (d, &x) in t.data_mut().iter_mut().zip(delta) {
                    *d += x;
                }
            }
        };

        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if grads[a.0].is_some() {
                    let d = up.matmul(&self.value(b).transpose()).expect("matmul grad");
                    accumulate(grads, a, d.data());
                }
                if grads[b.0].is_some() {
                    let d = self.value(a).transpose().matmul(up).expect("matmul grad");
                    accumulate(grads, b, d.data());
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, a, g);
                accumulate(grads, b, g);
            }
            Op::Sub(a, b) => {
                accumulate(grads, a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                accumulate(grads, b, &neg);
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(a).data(), self.value(b).data());
                let da: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.iter().zip(x).map(|(g, x)| g * x).collect();
                accumulate(grads, a, &da);
                accumulate(grads, b, &db);
            }
            Op::Scale(a, c) => {
                let d: Vec<f64> = g.iter().map(|v| v * c).collect();
                accumulate(grads, a, &d);
            }
            Op::Exp(a) => {
                let d: Vec<f64> = g.iter().zip(out.data()).map(|(g, y)| g * y).collect();
                accumulate(grads, a, &d);
            }
            Op::Log(a) => {
                let x = self.value(a).data();
                let d: Vec<f64> = g.iter().zip(x).map(|(g, x)| g / x).collect();
                accumulate(grads, a, &d);
            }
            Op::Relu(a) => {
                let x = self.value(a).data();
                let d: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, a, &d);
            }
            Op::Square(a) => {
                let x = self.value(a).data();
                let d: Vec<f64> = g.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect();
                accumulate(grads, a, &d);
            }
            Op::SumAll(a) => {
                let d = vec![g[0]; self.value(a).len()];
                accumulate(grads, a, &d);
            }
            Op::SumRows(a) => {
                let k = self.value(a).cols();
                let d: Vec<f64> = g.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
                accumulate(grads, a, &d);
            }
            Op::SumCols(a) => {
                let n = self.value(a).rows();
                let d: Vec<f64> = (0..n).flat_map(|_| g.iter().copied()).collect();
                accumulate(grads, a, &d);
            }
            Op::Transpose(a) => {
                accumulate(grads, a, up.transpose().data());
            }
            Op::Diag(a) => {
                let n = self.value(a).rows();
                let mut d = vec![0.0; n * n];
                for (j, &v) in g.iter().enumerate() {
                    d[j * n + j] = v;
                }
                accumulate(grads, a, &d);
            }
            Op::L2NormalizeRows(a) => {
                let x = self.value(a);
                let k = x.cols();
                let mut d = Vec::with_capacity(x.len());
                for ((xr, yr), gr) in x.row_iter().zip(out.row_iter()).zip(g.chunks(k)) {
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    d.extend(yr.iter().zip(gr).map(|(y, g)| (g - y * dot) / norm));
                }
                accumulate(grads, a, &d);
            }
            Op::SoftmaxRows(a) => {
                let k = out.cols();
                let mut d = Vec::with_capacity(out.len());
                for (yr, gr) in out.row_iter().zip(g.chunks(k)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    d.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                }
                accumulate(grads, a, &d);
            }
            Op::LogSoftmaxRows(a) => {
                let k = out.cols();
                let mut d = Vec::with_capacity(out.len());
                for (yr, gr) in out.row_iter().zip(g.chunks(k)) {
                    let total: f64 = gr.iter().sum();
                    d.extend(yr.iter().zip(gr).map(|(y, g)| g - y.exp() * total));
                }
                accumulate(grads, a, &d);
            }
        }
    }
}
