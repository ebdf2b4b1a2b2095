use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{AggResidualBlock, Dense, Layer};
use super::network::{Group, Network};
use crate::error::{Error, Result};

/// Classifier head: `Dense → ReLU → Dropout → Dense → ReLU → Dropout → Dense(2) → Softmax`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub in_dim: usize,
    pub hidden: [usize; 2],
    #[serde(default = "default_dropout")]
    pub dropout: [f64; 2],
}

fn default_dropout() -> [f64; 2] {
    [0.25, 0.5]
}

impl HeadSpec {
    pub fn new(in_dim: usize, hidden: [usize; 2]) -> Self {
        HeadSpec { in_dim, hidden, dropout: default_dropout() }
    }

    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Layer>> {
        let [h1, h2] = self.hidden;
        Ok(vec![
            Layer::Dense(Dense::new(self.in_dim, h1, rng)?),
            Layer::Relu,
            Layer::dropout(self.dropout[0])?,
            Layer::Dense(Dense::new(h1, h2, rng)?),
            Layer::Relu,
            Layer::dropout(self.dropout[1])?,
            Layer::Dense(Dense::new(h2, 2, rng)?),
            Layer::Softmax { classes: 2 },
        ])
    }
}

/// Stem (first group), a stack of aggregated residual blocks (middle group)
/// and a classifier head (last group).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub stem_width: usize,
    pub blocks: usize,
    pub cardinality: usize,
    pub branch_width: usize,
    pub head_hidden: [usize; 2],
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            input_dim: 256,
            stem_width: 64,
            blocks: 1,
            cardinality: 4,
            branch_width: 8,
            head_hidden: [32, 16],
        }
    }
}

impl ArchSpec {
    pub fn head(&self) -> HeadSpec {
        HeadSpec::new(self.stem_width, self.head_hidden)
    }

    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Network> {
        if self.input_dim == 0 || self.stem_width == 0 {
            return Err(Error::invalid("input_dim and stem_width must be >= 1"));
        }
        let mut layers = vec![Layer::Dense(Dense::new(self.input_dim, self.stem_width, rng)?), Layer::Relu];
        let b1 = layers.len();
        for _ in 0..self.blocks {
            layers.push(Layer::AggResidual(AggResidualBlock::new(
                self.stem_width,
                self.cardinality,
                self.branch_width,
                rng,
            )?));
            layers.push(Layer::Relu);
        }
        let b2 = layers.len();
        layers.extend(self.head().build(rng)?);
        Network::new(layers, [b1, b2])
    }
}

/// Keeps the source's first and middle groups and attaches a freshly
/// initialized head.
pub fn transfer_from<R: Rng + ?Sized>(source: &Network, head: &HeadSpec, rng: &mut R) -> Result<Network> {
    let base_out = source.group_input_dim(Group::Last);
    if base_out != head.in_dim {
        return Err(Error::Shape(format!(
            "head expects {} inputs but the transferred base yields {base_out}",
            head.in_dim
        )));
    }
    let (mut layers, [b1, b2]) = source.clone().into_parts();
    layers.truncate(b2);
    layers.extend(head.build(rng)?);
    Network::new(layers, [b1, b2])
}
