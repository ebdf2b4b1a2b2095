use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{log_sum_exp, relu, softmax_rows, Layer};
use super::Tensor;
use crate::error::{Error, Result};

/// Layer groups for discriminative learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    First,
    Middle,
    Last,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::First, Group::Middle, Group::Last];

    pub fn index(self) -> usize {
        match self {
            Group::First => 0,
            Group::Middle => 1,
            Group::Last => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

/// Ordered layers split into first/middle/last groups by two boundaries:
/// `[0, b1)`, `[b1, b2)`, `[b2, len)`. The last layer is always a 2-class softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    boundaries: [usize; 2],
    mode: Mode,
}

/// Per-parameter gradients, indexed `[layer][param]` in the same order as
/// [`Layer::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub per_layer: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.per_layer.iter().flatten()
    }
}

enum Cache {
    None,
    Mask(Tensor),
    Branches(Vec<Tensor>),
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
/// Dropout masks drawn during the forward pass live here.
pub struct Trace {
    inputs: Vec<Tensor>,
    caches: Vec<Cache>,
    probs: Tensor,
}

impl Trace {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    #[cfg(test)]
    pub(crate) fn inputs_for_test(&self) -> &[Tensor] {
        &self.inputs
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, boundaries: [usize; 2]) -> Result<Self> {
        let [b1, b2] = boundaries;
        if b1 > b2 || b2 > layers.len() {
            return Err(Error::invalid(format!(
                "group boundaries {boundaries:?} invalid for {} layers",
                layers.len()
            )));
        }
        match layers.last() {
            Some(Layer::Softmax { classes: 2 }) => {}
            _ => return Err(Error::invalid("final layer must be a 2-class softmax")),
        }
        let mut dim: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            if let Layer::Softmax { .. } = layer {
                if i + 1 != layers.len() {
                    return Err(Error::LayerShape { layer: i, msg: "softmax must be the final layer".into() });
                }
            }
            if let Layer::Dropout { p } = layer {
                if !(0.0..1.0).contains(p) {
                    return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
                }
            }
            if let (Some(d), Some(expected)) = (dim, layer.in_dim()) {
                if d != expected {
                    return Err(Error::LayerShape {
                        layer: i,
                        msg: format!("expects {expected} inputs, previous layer yields {d}"),
                    });
                }
            }
            let input = dim.or(layer.in_dim());
            dim = input.map(|d| layer.out_dim(d));
        }
        Ok(Network { layers, boundaries, mode: Mode::Eval })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn boundaries(&self) -> [usize; 2] {
        self.boundaries
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_dim(&self) -> usize {
        self.layers.iter().find_map(Layer::in_dim).unwrap_or(2)
    }

    /// Width of the activations entering the last group.
    pub fn group_input_dim(&self, group: Group) -> usize {
        let start = self.group_range(group).start;
        let mut dim = self.input_dim();
        for layer in &self.layers[..start] {
            dim = layer.out_dim(dim);
        }
        dim
    }

    pub fn group_of(&self, layer: usize) -> Group {
        let [b1, b2] = self.boundaries;
        if layer < b1 {
            Group::First
        } else if layer < b2 {
            Group::Middle
        } else {
            Group::Last
        }
    }

    pub fn group_range(&self, group: Group) -> std::ops::Range<usize> {
        let [b1, b2] = self.boundaries;
        match group {
            Group::First => 0..b1,
            Group::Middle => b1..b2,
            Group::Last => b2..self.layers.len(),
        }
    }

    pub fn group_layers(&self, group: Group) -> &[Layer] {
        &self.layers[self.group_range(group)]
    }

    /// All parameter values of a group, flattened in layer order.
    pub fn group_params(&self, group: Group) -> Vec<f64> {
        self.layers[self.group_range(group)]
            .iter()
            .flat_map(|l| l.params())
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Re-draws every parametric layer of `group` with Kaiming weights and zero biases.
    pub fn reinit_group<R: Rng + ?Sized>(&mut self, group: Group, rng: &mut R) -> Result<()> {
        let range = self.group_range(group);
        for layer in &mut self.layers[range] {
            layer.reinit(rng)?;
        }
        Ok(())
    }

    /// Splits into (first+middle layers, last layers).
    pub(crate) fn into_parts(self) -> (Vec<Layer>, [usize; 2]) {
        (self.layers, self.boundaries)
    }

    /// Forward pass in the network's current mode; returns per-row class probabilities.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &Tensor, rng: &mut R) -> Result<Tensor> {
        Ok(self.forward_trace(batch, rng)?.probs)
    }

    /// Eval-mode forward pass (dropout is the identity). Needs no randomness and
    /// only borrows the network, so it is safe to call from many threads.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = match layer {
                Layer::Dense(d) => {
                    check_width(i, d.in_dim(), &x)?;
                    d.forward(&x)?
                }
                Layer::Relu => x.map(relu),
                Layer::Dropout { .. } => x,
                Layer::AggResidual(b) => {
                    check_width(i, b.dim, &x)?;
                    b.forward(&x)?
                }
                Layer::Softmax { classes } => {
                    check_width(i, *classes, &x)?;
                    softmax_rows(&x)
                }
            };
        }
        Ok(x)
    }

    pub fn forward_trace<R: Rng + ?Sized>(&self, batch: &Tensor, rng: &mut R) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, cache) = match layer {
                Layer::Dense(d) => {
                    check_width(i, d.in_dim(), &x)?;
                    (d.forward(&x)?, Cache::None)
                }
                Layer::Relu => (x.map(relu), Cache::None),
                Layer::Dropout { p } => {
                    if self.mode == Mode::Train && *p > 0.0 {
                        let keep = 1.0 / (1.0 - p);
                        let data = (0..x.len())
                            .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                            .collect();
                        let mask = Tensor::from_vec(x.rows(), x.cols(), data)?;
                        let mut y = x.clone();
                        for (v, m) in y.data_mut().iter_mut().zip(mask.data()) {
                            *v *= m;
                        }
                        (y, Cache::Mask(mask))
                    } else {
                        (x.clone(), Cache::None)
                    }
                }
                Layer::AggResidual(b) => {
                    check_width(i, b.dim, &x)?;
                    let (y, hidden) = b.forward_cached(&x)?;
                    (y, Cache::Branches(hidden))
                }
                Layer::Softmax { classes } => {
                    check_width(i, *classes, &x)?;
                    (softmax_rows(&x), Cache::None)
                }
            };
            inputs.push(x);
            caches.push(cache);
            x = next;
        }
        Ok(Trace { inputs, caches, probs: x })
    }

    /// Mean softmax cross-entropy over the batch and its gradient for every parameter.
    pub fn backward(&self, trace: &Trace, labels: &[usize]) -> Result<(f64, Gradients)> {
        let n = trace.probs.rows();
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
        }
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let classes = trace.probs.cols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label: bad, classes });
        }

        let last = self.layers.len() - 1;
        let logits = &trace.inputs[last];
        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| log_sum_exp(logits.row(r)) - logits.get(r, y))
            .sum::<f64>()
            / n as f64;

        let mut grad = trace.probs.clone();
        for (r, &y) in labels.iter().enumerate() {
            let v = grad.get(r, y);
            grad.set(r, y, v - 1.0);
        }
        let scale = 1.0 / n as f64;
        grad.data_mut().iter_mut().for_each(|g| *g *= scale);

        let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        for i in (0..last).rev() {
            let x = &trace.inputs[i];
            grad = match (&self.layers[i], &trace.caches[i]) {
                (Layer::Dense(d), _) => {
                    per_layer[i] = vec![x.matmul_tn(&grad)?, grad.col_sums()];
                    grad.matmul_nt(&d.weight)?
                }
                (Layer::Relu, _) => {
                    let mut g = grad;
                    for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
                        if *xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    g
                }
                (Layer::Dropout { .. }, Cache::Mask(mask)) => {
                    let mut g = grad;
                    for (gv, m) in g.data_mut().iter_mut().zip(mask.data()) {
                        *gv *= m;
                    }
                    g
                }
                (Layer::Dropout { .. }, _) => grad,
                (Layer::AggResidual(b), Cache::Branches(hidden)) => {
                    let mut dx = grad.clone();
                    let mut grads = Vec::with_capacity(4 * b.branches.len());
                    for (br, pre) in b.branches.iter().zip(hidden) {
                        let h = pre.map(relu);
                        let dw_out = h.matmul_tn(&grad)?;
                        let db_out = grad.col_sums();
                        let mut dh = grad.matmul_nt(&br.w_out)?;
                        for (g, p) in dh.data_mut().iter_mut().zip(pre.data()) {
                            if *p <= 0.0 {
                                *g = 0.0;
                            }
                        }
                        let dw_in = x.matmul_tn(&dh)?;
                        let db_in = dh.col_sums();
                        dx.add_assign(&dh.matmul_nt(&br.w_in)?);
                        grads.extend([dw_in, db_in, dw_out, db_out]);
                    }
                    per_layer[i] = grads;
                    dx
                }
                (Layer::AggResidual(_), _) | (Layer::Softmax { .. }, _) => {
                    return Err(Error::LayerShape { layer: i, msg: "trace does not match network".into() })
                }
            };
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        Ok((loss, Gradients { per_layer }))
    }

    /// Forward in the current mode plus backward on the same trace.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        batch: &Tensor,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let trace = self.forward_trace(batch, rng)?;
        self.backward(&trace, labels)
    }

    /// Mean cross-entropy of eval-mode predictions.
    pub fn eval_loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let probs = self.predict(batch)?;
        if labels.len() != probs.rows() || labels.is_empty() {
            return Err(Error::Shape(format!("{} labels for a batch of {}", labels.len(), probs.rows())));
        }
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= probs.cols() {
                return Err(Error::InvalidLabel { label: y, classes: probs.cols() });
            }
            total -= probs.get(r, y).max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / labels.len() as f64)
    }

    /// Plain SGD, `w ← w − lr(group)·g`. Groups with rate zero are not touched.
    pub fn sgd_step(&mut self, grads: &Gradients, group_lrs: [f64; 3]) -> Result<()> {
        if let Some(lr) = group_lrs.iter().find(|lr| !(**lr >= 0.0) || !lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {lr} must be finite and >= 0")));
        }
        if grads.per_layer.len() != self.layers.len() {
            return Err(Error::Shape("gradients do not match network layers".into()));
        }
        for i in 0..self.layers.len() {
            let lr = group_lrs[self.group_of(i).index()];
            let layer_grads = &grads.per_layer[i];
            let params = self.layers[i].params_mut();
            if params.len() != layer_grads.len() {
                return Err(Error::LayerShape { layer: i, msg: "gradient count mismatch".into() });
            }
            if lr == 0.0 {
                continue;
            }
            for (p, g) in params.into_iter().zip(layer_grads) {
                if p.shape() != g.shape() {
                    return Err(Error::LayerShape { layer: i, msg: "gradient shape mismatch".into() });
                }
                for (w, gv) in p.data_mut().iter_mut().zip(g.data()) {
                    *w -= lr * gv;
                }
            }
        }
        Ok(())
    }
}

fn check_width(layer: usize, expected: usize, x: &Tensor) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::LayerShape {
            layer,
            msg: format!("expects {expected} input columns, got {}", x.cols()),
        });
    }
    Ok(())
}

/// Free-function form of [`Network::forward`].
pub fn forward<R: Rng + ?Sized>(net: &Network, batch: &Tensor, rng: &mut R) -> Result<Tensor> {
    net.forward(batch, rng)
}

/// Free-function form of [`Network::sgd_step`].
pub fn sgd_step(net: &mut Network, grads: &Gradients, group_lrs: [f64; 3]) -> Result<()> {
    net.sgd_step(grads, group_lrs)
}
