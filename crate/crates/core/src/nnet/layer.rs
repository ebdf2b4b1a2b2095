use rand::Rng;

use super::init::{kaiming_init, zero_bias};
use super::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer, `y = x·W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Dense { weight: kaiming_init(in_dim, (in_dim, out_dim), rng)?, bias: zero_bias(out_dim) })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        if bias.shape() != (1, weight.cols()) {
            return Err(Error::Shape(format!(
                "dense bias {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Dense { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row(&self.bias);
        Ok(y)
    }
}

/// One `Dense → ReLU → Dense` path of an aggregated residual block.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub w_in: Tensor,
    pub b_in: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl Branch {
    pub fn new<R: Rng + ?Sized>(dim: usize, width: usize, rng: &mut R) -> Result<Self> {
        Ok(Branch {
            w_in: kaiming_init(dim, (dim, width), rng)?,
            b_in: zero_bias(width),
            w_out: kaiming_init(width, (width, dim), rng)?,
            b_out: zero_bias(dim),
        })
    }

    /// Returns `(hidden pre-activation, branch output)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut pre = x.matmul(&self.w_in)?;
        pre.add_row(&self.b_in);
        let hidden = pre.map(relu);
        let mut out = hidden.matmul(&self.w_out)?;
        out.add_row(&self.b_out);
        Ok((pre, out))
    }
}

/// Dense analog of a ResNeXt block: the input plus the sum of `C` parallel
/// branches of equal width. Input and output dimensions coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct AggResidualBlock {
    pub dim: usize,
    pub width: usize,
    pub branches: Vec<Branch>,
}

impl AggResidualBlock {
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        cardinality: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if cardinality == 0 || dim == 0 || width == 0 {
            return Err(Error::invalid("aggregated block needs cardinality, dim and width >= 1"));
        }
        let branches = (0..cardinality)
            .map(|_| Branch::new(dim, width, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(AggResidualBlock { dim, width, branches })
    }

    pub fn cardinality(&self) -> usize {
        self.branches.len()
    }

    /// `y = x + Σ branch_i(x)`; also returns each branch's hidden pre-activation.
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        if x.cols() != self.dim {
            return Err(Error::Shape(format!(
                "aggregated block expects {} columns, got {}",
                self.dim,
                x.cols()
            )));
        }
        let mut y = x.clone();
        let mut hidden = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let (pre, out) = branch.forward(x)?;
            y.add_assign(&out);
            hidden.push(pre);
        }
        Ok((y, hidden))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_cached(x).map(|(y, _)| y)
    }
}

pub fn agg_block_forward(block: &AggResidualBlock, x: &Tensor) -> Result<Tensor> {
    block.forward(x)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Relu,
    /// Inverted dropout with drop probability `p ∈ [0, 1)`.
    Dropout { p: f64 },
    AggResidual(AggResidualBlock),
    /// Softmax over `classes` logits; only valid as the final layer.
    Softmax { classes: usize },
}

impl Layer {
    pub fn dropout(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        Ok(Layer::Dropout { p })
    }

    /// Expected input width, when the layer constrains it.
    pub fn in_dim(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.in_dim()),
            Layer::AggResidual(b) => Some(b.dim),
            Layer::Softmax { classes } => Some(*classes),
            Layer::Relu | Layer::Dropout { .. } => None,
        }
    }

    /// Output width given the input width.
    pub fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            Layer::Dense(d) => d.out_dim(),
            _ => in_dim,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::AggResidual(b) => b
                .branches
                .iter()
                .flat_map(|br| [&br.w_in, &br.b_in, &br.w_out, &br.b_out])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::AggResidual(b) => b
                .branches
                .iter_mut()
                .flat_map(|br| [&mut br.w_in, &mut br.b_in, &mut br.w_out, &mut br.b_out])
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Fresh Kaiming weights and zero biases, same shapes.
    pub fn reinit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        match self {
            Layer::Dense(d) => *d = Dense::new(d.in_dim(), d.out_dim(), rng)?,
            Layer::AggResidual(b) => *b = AggResidualBlock::new(b.dim, b.cardinality(), b.width, rng)?,
            _ => {}
        }
        Ok(())
    }
}

pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let cols = out.cols();
    for r in 0..out.rows() {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `log Σ exp(row)` computed stably.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
