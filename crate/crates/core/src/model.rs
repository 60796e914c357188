//! The clustering network: a rectifier MLP whose last (linear) layer emits
//! K assignment features `z`; `softmax(z)` gives assignment probabilities
//! and `argmax` the predicted cluster.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{softmax_into, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DRCM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One affine layer; `weight` is `[fan_in, fan_out]`, `bias` is `[1, fan_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterModel {
    layers: Vec<Layer>,
}

/// Parameter handles of a model registered on a graph.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub params: Vec<(Var, Var)>,
}

/// Model outputs for a batch and its augmentation.
#[derive(Clone, Debug)]
pub struct AssignmentBatch {
    pub z: Tensor,
    pub z_aug: Tensor,
    pub p: Tensor,
    pub p_aug: Tensor,
    pub labels_pred: Vec<usize>,
}

impl ClusterModel {
    /// Weights uniform on `[-a, a]` with `a = √(2/fan_in)`, zero biases,
    /// deterministic in `seed`. `layer_sizes` runs from input dim to K.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Parameter(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Parameter(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (2.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-a..=a))
                    .collect();
                Layer {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("sized"),
                    bias: Tensor::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(ClusterModel { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != [1, l.weight.cols()] {
                return Err(Error::dim(
                    "layer bias",
                    l.bias.shape(),
                    &[1, l.weight.cols()],
                ));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::dim(
                    "layer chain",
                    layers[i - 1].weight.shape(),
                    l.weight.shape(),
                ));
            }
        }
        Ok(ClusterModel { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.cols()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    /// Number of clusters (width of the final layer).
    pub fn k(&self) -> usize {
        self.layers.last().expect("nonempty").weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::dim(
                "forward",
                x.shape(),
                &[x.rows(), self.input_dim()],
            ));
        }
        Ok(())
    }

    /// Registers every weight and bias as a graph parameter.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        BoundModel {
            params: self
                .layers
                .iter()
                .map(|l| (g.param(l.weight.clone()), g.param(l.bias.clone())))
                .collect(),
        }
    }

    /// Differentiable forward pass; returns `(z, p)`.
    pub fn forward_graph(&self, g: &mut Graph, bound: &BoundModel, x: Var) -> Result<(Var, Var)> {
        self.check_input(g.value(x))?;
        let n = g.value(x).rows();
        let ones = g.constant(Tensor::ones(n, 1));
        let mut h = x;
        let last = bound.params.len() - 1;
        for (i, &(w, b)) in bound.params.iter().enumerate() {
            let xw = g.matmul(h, w)?;
            let bias = g.matmul(ones, b)?;
            h = g.add(xw, bias)?;
            if i < last {
                h = g.relu(h);
            }
        }
        let p = g.softmax_rows(h)?;
        Ok((h, p))
    }

    /// Plain evaluation without recording a graph; returns `(z, p)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = h.matmul(&l.weight)?;
            let cols = next.cols();
            for row in next.data_mut().chunks_mut(cols) {
                for (v, b) in row.iter_mut().zip(l.bias.data()) {
                    *v += b;
                    if i < last {
                        *v = v.max(0.0);
                    }
                }
            }
            h = next;
        }
        let mut p = h.clone();
        let k = p.cols();
        for (row, out) in h.row_iter().zip(p.data_mut().chunks_mut(k)) {
            softmax_into(row, out);
        }
        Ok((h, p))
    }

    /// Hard cluster labels (argmax of p, lowest index on ties).
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.1.argmax_rows())
    }

    pub fn assign(&self, x: &Tensor, x_aug: &Tensor) -> Result<AssignmentBatch> {
        let (z, p) = self.forward(x)?;
        let (z_aug, p_aug) = self.forward(x_aug)?;
        let labels_pred = p.argmax_rows();
        Ok(AssignmentBatch {
            z,
            z_aug,
            p,
            p_aug,
            labels_pred,
        })
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.weight.rows() as u32).to_le_bytes())?;
            w.write_all(&(l.weight.cols() as u32).to_le_bytes())?;
            for v in l.weight.data().iter().chain(l.bias.data()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        let mut cur = ByteCursor::new(&buf);
        let magic = cur.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                detail: format!("bad magic {magic:?}, expected \"DRCM\""),
            });
        }
        let version = cur.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                detail: format!("unsupported version {version}"),
            });
        }
        let count = cur.u32("layer count")? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let at = cur.pos;
            let rows = cur.u32("rows")? as usize;
            let cols = cur.u32("cols")? as usize;
            let weight = cur.f64s(rows * cols, "weights")?;
            let bias = cur.f64s(cols, "biases")?;
            let weight = Tensor::matrix(rows, cols, weight).map_err(|e| Error::Format {
                offset: at as u64,
                detail: e.to_string(),
            })?;
            layers.push(Layer {
                weight,
                bias: Tensor::matrix(1, cols, bias).expect("sized"),
            });
        }
        if cur.pos != buf.len() {
            return Err(Error::Format {
                offset: cur.pos as u64,
                detail: format!("{} trailing bytes", buf.len() - cur.pos),
            });
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_checkpoint(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(std::io::BufReader::new(f))
    }
}

/// Little-endian reader that reports the byte offset of truncations.
pub(crate) struct ByteCursor<'a> {
    buf: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteCursor { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos as u64,
                detail: format!(
                    "truncated reading {what}: expected {} bytes, file has {}",
                    self.pos.saturating_add(n),
                    self.buf.len()
                ),
            }),
        }
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.saturating_mul(8), what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
