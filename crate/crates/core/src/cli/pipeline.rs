//! Glue between config, data, training and evaluation shared by the
//! subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::datapipe::store::read_dataset;
use crate::datapipe::{
    generate_auxiliary, generate_pretext, generate_synthetic, merge_auxiliary, node_relabel, stratified_split, Image,
    LabeledImage, NodeSample, Preprocess, Split, SplitSpec,
};
use crate::error::{Error, Result};
use crate::eval::{confusion, node_accuracy, soft_accuracy, EvalReport, NodeAccuracies, PerformanceTable, TableRow};
use crate::hierarchy::{
    HierarchyTree, LeafLabel, ManifestNodes, NodeId, NodeManifest, TreeManifest, VersionEntry, MANIFEST_VERSION,
};
use crate::io::{write_atomic, write_json};
use crate::nnet::{transfer_from, Network};
use crate::seed::component_rng;
use crate::train::{pretrain_generic, select_best_baseline, train_node, Selection, TrainOutcome};

/// Primary samples split into train/validation, plus auxiliary samples that
/// only ever join the training side. Images hold network inputs
/// (preprocessed and normalized).
#[derive(Clone, Debug)]
pub struct Prepared {
    pub primary: Vec<LabeledImage>,
    pub aux: Vec<LabeledImage>,
    pub split: Split,
}

impl Prepared {
    pub fn new(samples: Vec<LabeledImage>, preprocess: &Preprocess, split: &SplitSpec) -> Result<Self> {
        let mut primary = Vec::new();
        let mut aux = Vec::new();
        for s in samples {
            let pixels = preprocess.network_input(&s.pixels)?;
            let s = LabeledImage { pixels, label: s.label };
            if s.leaf().is_some() {
                primary.push(s);
            } else {
                aux.push(s);
            }
        }
        let leaves: Vec<usize> = primary.iter().filter_map(|s| s.leaf()).map(LeafLabel::index).collect();
        let split = stratified_split(&leaves, split)?;
        Ok(Prepared { primary, aux, split })
    }

    pub fn train_primary(&self) -> Vec<LabeledImage> {
        self.split.train.iter().map(|&i| self.primary[i].clone()).collect()
    }

    pub fn val_primary(&self) -> Vec<LabeledImage> {
        self.split.val.iter().map(|&i| self.primary[i].clone()).collect()
    }

    /// Node training set (with auxiliary merge) and validation set.
    pub fn node_sets(&self, node: NodeId) -> (Vec<NodeSample>, Vec<NodeSample>) {
        (merge_auxiliary(&self.train_primary(), &self.aux, node), node_relabel(&self.val_primary(), node))
    }

    /// Validation inputs and their leaves.
    pub fn val_inputs(&self) -> (Vec<Vec<f64>>, Vec<LeafLabel>) {
        self.val_primary()
            .iter()
            .map(|s| (s.pixels.data().to_vec(), s.leaf().expect("primary")))
            .unzip()
    }
}

/// Raw samples from `data_dir`, or generated from the config's spec.
pub fn load_samples(cfg: &RunConfig) -> Result<Vec<LabeledImage>> {
    match &cfg.data_dir {
        Some(dir) => {
            let (_, samples) = read_dataset(dir)?;
            Ok(samples)
        }
        None => generate_samples(cfg),
    }
}

pub fn generate_samples(cfg: &RunConfig) -> Result<Vec<LabeledImage>> {
    let mut samples = generate_synthetic(&cfg.dataset)?;
    if let Some(aux) = &cfg.auxiliary {
        samples.extend(generate_auxiliary(&cfg.dataset, aux)?);
    }
    Ok(samples)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let p = Prepared::new(load_samples(cfg)?, &cfg.preprocess, &cfg.split)?;
    if let Some(s) = p.primary.first() {
        if s.pixels.len() != cfg.input_dim() {
            return Err(Error::Shape(format!(
                "preprocessed images have {} values but the config implies {}",
                s.pixels.len(),
                cfg.input_dim()
            )));
        }
    }
    Ok(p)
}

/// Base network pretrained on the pretext task, used as the generic
/// transfer source.
pub fn generic_base(cfg: &RunConfig) -> Result<Network> {
    let d = &cfg.dataset;
    let data = generate_pretext(&cfg.pretext, d.height, d.width, d.channels)?
        .into_iter()
        .map(|(img, label)| Ok(NodeSample { image: cfg.preprocess.network_input(&img)?, label }))
        .collect::<Result<Vec<_>>>()?;
    let net = cfg.arch().build(&mut component_rng(cfg.seed, "arch/generic"))?;
    pretrain_generic(&net, &data, &cfg.pretrain)
}

/// Network with a fresh head on top of `source`'s base.
pub fn transfer(cfg: &RunConfig, source: &Network, tag: &str) -> Result<Network> {
    transfer_from(source, &cfg.arch().head(), &mut component_rng(cfg.seed, &format!("head/{tag}")))
}

/// Freshly initialized network of the configured shape.
pub fn fresh(cfg: &RunConfig, tag: &str) -> Result<Network> {
    cfg.arch().build(&mut component_rng(cfg.seed, &format!("arch/{tag}")))
}

pub fn write_outcome(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_atomic(&dir.join("iterations.csv"), outcome.report.iterations_csv().as_bytes())?;
    write_atomic(&dir.join("epochs.csv"), outcome.report.epochs_csv().as_bytes())?;
    write_atomic(&dir.join("lr_find.csv"), outcome.report.lr_curve.to_csv().as_bytes())?;
    outcome.final_net.save(&dir.join("final.json"))?;
    if let Some(best) = &outcome.best {
        best.save(&dir.join("best.json"))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub tag: String,
    pub best_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub chosen: String,
    pub candidates: Vec<CandidateSummary>,
}

impl From<&Selection> for SelectionSummary {
    fn from(s: &Selection) -> Self {
        SelectionSummary {
            chosen: s.tag.clone(),
            candidates: s
                .outcomes
                .iter()
                .map(|o| CandidateSummary {
                    tag: o.report.tag.clone(),
                    best_accuracy: o.report.best_accuracy(),
                    best_epoch: o.report.best.as_ref().map(|b| b.epoch),
                })
                .collect(),
        }
    }
}

pub struct HierarchyRun {
    pub generic: Network,
    pub carci: TrainOutcome,
    pub norbe: Selection,
    pub invis: Selection,
}

impl HierarchyRun {
    pub fn tree(&self) -> HierarchyTree<&Network> {
        HierarchyTree::new(self.carci.best_net(), self.norbe.chosen().best_net(), self.invis.chosen().best_net())
    }
}

pub const GENERIC_TAG: &str = "generic";
pub const CARCI_TAG: &str = "carci";

/// Carci from the generic base, then each specialist from the better of the
/// generic base and the trained Carci model.
pub fn train_hierarchy(cfg: &RunConfig, data: &Prepared) -> Result<HierarchyRun> {
    let generic = generic_base(cfg)?;
    let (train, val) = data.node_sets(NodeId::Carci);
    let carci = train_node(&transfer(cfg, &generic, "carci")?, &train, &val, &cfg.train.carci, CARCI_TAG)?;
    let specialist = |id: NodeId| -> Result<Selection> {
        let (train, val) = data.node_sets(id);
        let candidates = vec![
            (GENERIC_TAG.to_string(), transfer(cfg, &generic, &format!("{id}/{GENERIC_TAG}"))?),
            (CARCI_TAG.to_string(), transfer(cfg, carci.best_net(), &format!("{id}/{CARCI_TAG}"))?),
        ];
        select_best_baseline(&candidates, &train, &val, cfg.train.get(id))
    };
    let norbe = specialist(NodeId::NorBe)?;
    let invis = specialist(NodeId::InvIs)?;
    Ok(HierarchyRun { generic, carci, norbe, invis })
}

/// Writes every artifact of a hierarchy run and returns the manifest path.
pub fn write_hierarchy(cfg: &RunConfig, run: &HierarchyRun) -> Result<PathBuf> {
    let out = &cfg.output_dir;
    run.generic.save(&out.join("generic.json"))?;
    write_outcome(&out.join("carci"), &run.carci)?;
    for (id, sel) in [(NodeId::NorBe, &run.norbe), (NodeId::InvIs, &run.invis)] {
        for o in &sel.outcomes {
            write_outcome(&out.join(id.name()).join(&o.report.tag), o)?;
        }
        write_json(&out.join(id.name()).join("selection.json"), &SelectionSummary::from(sel))?;
    }
    let best_or_final = |o: &TrainOutcome| if o.best.is_some() { "best.json" } else { "final.json" };
    let entry = |p: PathBuf| vec![VersionEntry { path: p, weight: 1.0 }];
    let manifest = TreeManifest {
        format_version: MANIFEST_VERSION,
        nodes: ManifestNodes {
            carci: NodeManifest::new(NodeId::Carci, entry(PathBuf::from("carci").join(best_or_final(&run.carci)))),
            norbe: NodeManifest::new(
                NodeId::NorBe,
                entry(PathBuf::from("norbe").join(&run.norbe.tag).join(best_or_final(run.norbe.chosen()))),
            ),
            invis: NodeManifest::new(
                NodeId::InvIs,
                entry(PathBuf::from("invis").join(&run.invis.tag).join(best_or_final(run.invis.chosen()))),
            ),
        },
        preprocess: cfg.preprocess,
        split: cfg.split.clone(),
    };
    let path = out.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Hard-routing confusion, soft diagnostic and per-node accuracies on the
/// validation split.
pub fn evaluate_tree<N: crate::hierarchy::BinaryNode>(tree: &HierarchyTree<N>, data: &Prepared) -> Result<EvalReport> {
    let (inputs, truth) = data.val_inputs();
    let m = confusion(tree, &inputs, &truth)?;
    let node = |id: NodeId| node_accuracy(tree.node(id), &node_relabel(&data.val_primary(), id));
    Ok(EvalReport {
        samples: truth.len(),
        accuracy: m.accuracy(),
        soft_accuracy: soft_accuracy(tree, &inputs, &truth)?,
        nodes: NodeAccuracies { carci: node(NodeId::Carci)?, norbe: node(NodeId::NorBe)?, invis: node(NodeId::InvIs)? },
        confusion: m,
    })
}

pub const TABLE_COLUMN: &str = "Validation";

pub fn report_table(report: &EvalReport) -> Result<PerformanceTable> {
    let mut t = PerformanceTable::with_columns([TABLE_COLUMN]);
    for id in NodeId::ALL {
        t.set(TableRow::from(id), TABLE_COLUMN, report.nodes.get(id))?;
    }
    t.set(TableRow::WholeSystem, TABLE_COLUMN, report.accuracy)?;
    Ok(t)
}

/// Reads a single sample file for prediction.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    crate::datapipe::store::decode_image(&bytes, path)
}
