//! JSON network format: layer specs, group boundaries and one flat parameter
//! array per layer. Floats are written in shortest round-trip form and parsed
//! with correct rounding, so a save/load cycle is value-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{AggResidualBlock, Branch, Dense, Layer};
use super::{Network, Tensor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Relu,
    Dropout { p: f64 },
    AggResidual { dim: usize, cardinality: usize, width: usize },
    Softmax { classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format_version: u32,
    pub group_boundaries: [usize; 2],
    pub layers: Vec<LayerSpec>,
    pub params: Vec<Vec<f64>>,
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerSpec::Dense { in_dim: d.in_dim(), out_dim: d.out_dim() },
                Layer::Relu => LayerSpec::Relu,
                Layer::Dropout { p } => LayerSpec::Dropout { p: *p },
                Layer::AggResidual(b) => {
                    LayerSpec::AggResidual { dim: b.dim, cardinality: b.cardinality(), width: b.width }
                }
                Layer::Softmax { classes } => LayerSpec::Softmax { classes: *classes },
            })
            .collect();
        let params = net
            .layers()
            .iter()
            .map(|l| l.params().iter().flat_map(|t| t.data().iter().copied()).collect())
            .collect();
        NetworkFile { format_version: FORMAT_VERSION, group_boundaries: net.boundaries(), layers, params }
    }
}

struct Cursor<'a> {
    values: &'a [f64],
    pos: usize,
    layer: usize,
}

impl Cursor<'_> {
    fn take(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let end = self.pos + rows * cols;
        if end > self.values.len() {
            return Err(Error::LayerShape { layer: self.layer, msg: "too few parameter values".into() });
        }
        let t = Tensor::from_vec(rows, cols, self.values[self.pos..end].to_vec())?;
        self.pos = end;
        Ok(t)
    }
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Network> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported network format_version {}", file.format_version)));
        }
        if file.params.len() != file.layers.len() {
            return Err(Error::invalid("params must hold one array per layer"));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, (spec, values)) in file.layers.iter().zip(&file.params).enumerate() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("layer {i} holds non-finite parameters")));
            }
            let mut cur = Cursor { values, pos: 0, layer: i };
            let layer = match *spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    Layer::Dense(Dense::from_parts(cur.take(in_dim, out_dim)?, cur.take(1, out_dim)?)?)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { p } => Layer::dropout(p)?,
                LayerSpec::AggResidual { dim, cardinality, width } => {
                    if cardinality == 0 {
                        return Err(Error::invalid("aggregated block cardinality must be >= 1"));
                    }
                    let mut branches = Vec::with_capacity(cardinality);
                    for _ in 0..cardinality {
                        branches.push(Branch {
                            w_in: cur.take(dim, width)?,
                            b_in: cur.take(1, width)?,
                            w_out: cur.take(width, dim)?,
                            b_out: cur.take(1, dim)?,
                        });
                    }
                    Layer::AggResidual(AggResidualBlock { dim, width, branches })
                }
                LayerSpec::Softmax { classes } => Layer::Softmax { classes },
            };
            if cur.pos != values.len() {
                return Err(Error::LayerShape { layer: i, msg: "too many parameter values".into() });
            }
            layers.push(layer);
        }
        Network::new(layers, file.group_boundaries)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&NetworkFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Network::try_from(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, &NetworkFile::from(self))
    }

    pub fn load(path: &Path) -> Result<Network> {
        let file: NetworkFile = crate::io::read_json(path)?;
        Network::try_from(file).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
    }
}
