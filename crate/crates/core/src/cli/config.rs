use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datapipe::{AuxSpec, DatasetSpec, PretextSpec, Preprocess, SplitSpec};
use crate::error::{Error, Result};
use crate::hierarchy::NodeId;
use crate::nnet::ArchSpec;
use crate::seed::derive_seed;
use crate::train::{PretrainConfig, TrainConfig};

/// Network shape without the input width, which follows from preprocessing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub stem_width: usize,
    pub blocks: usize,
    pub cardinality: usize,
    pub branch_width: usize,
    pub head_hidden: [usize; 2],
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { stem_width: 32, blocks: 1, cardinality: 4, branch_width: 8, head_hidden: [32, 16] }
    }
}

impl NetConfig {
    pub fn arch(&self, input_dim: usize) -> ArchSpec {
        ArchSpec {
            input_dim,
            stem_width: self.stem_width,
            blocks: self.blocks,
            cardinality: self.cardinality,
            branch_width: self.branch_width,
            head_hidden: self.head_hidden,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerNode<T> {
    pub carci: T,
    pub norbe: T,
    pub invis: T,
}

impl<T> PerNode<T> {
    pub fn get(&self, id: NodeId) -> &T {
        match id {
            NodeId::Carci => &self.carci,
            NodeId::NorBe => &self.norbe,
            NodeId::InvIs => &self.invis,
        }
    }

    pub fn get_mut(&mut self, id: NodeId) -> &mut T {
        match id {
            NodeId::Carci => &mut self.carci,
            NodeId::NorBe => &mut self.norbe,
            NodeId::InvIs => &mut self.invis,
        }
    }
}

/// Everything a run needs. Relative paths resolve against the directory of
/// the config file. Component seeds are derived from `seed`; the nested
/// `seed` fields must be left out (or zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Dataset written by `gen-data`. When absent the dataset is generated in
    /// memory from `dataset`.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub auxiliary: Option<AuxSpec>,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub pretext: PretextSpec,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default)]
    pub train: PerNode<TrainConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses, validates, resolves relative paths and derives component seeds.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.data_dir = cfg.data_dir.map(|d| base.join(d));
        Ok(cfg.resolved())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        let nested = [
            ("dataset.seed", self.dataset.seed),
            ("split.seed", self.split.seed),
            ("pretext.seed", self.pretext.seed),
            ("pretrain.seed", self.pretrain.seed),
            ("train.carci.seed", self.train.carci.seed),
            ("train.norbe.seed", self.train.norbe.seed),
            ("train.invis.seed", self.train.invis.seed),
        ];
        if let Some((name, _)) = nested.iter().find(|(_, s)| *s != 0) {
            return Err(Error::Config(format!("{name} is derived from the top-level seed; remove it")));
        }
        self.dataset.validate().map_err(cfg)?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        let short = self.dataset.height.min(self.dataset.width);
        self.preprocess.validate().map_err(cfg)?;
        if self.preprocess.resize_short > 4 * short {
            return Err(Error::Config("preprocess.resize_short is implausibly large for the dataset".into()));
        }
        if self.net.stem_width == 0 || self.net.cardinality == 0 || self.net.branch_width == 0 || self.net.head_hidden.contains(&0) {
            return Err(Error::Config("net widths and cardinality must be >= 1".into()));
        }
        if self.pretext.n < 2 {
            return Err(Error::Config("pretext.n must be >= 2".into()));
        }
        for id in NodeId::ALL {
            self.train.get(id).validate()?;
        }
        Ok(())
    }

    /// Copy with every component seed derived from the global one.
    pub fn resolved(mut self) -> Self {
        let g = self.seed;
        self.dataset.seed = derive_seed(g, "dataset");
        self.split.seed = derive_seed(g, "split");
        self.pretext.seed = derive_seed(g, "pretext");
        self.pretrain.seed = derive_seed(g, "pretrain");
        for id in NodeId::ALL {
            self.train.get_mut(id).seed = derive_seed(g, &format!("train/{id}"));
        }
        self
    }

    pub fn input_dim(&self) -> usize {
        self.preprocess.output_len(self.dataset.channels)
    }

    pub fn arch(&self) -> ArchSpec {
        self.net.arch(self.input_dim())
    }
}
