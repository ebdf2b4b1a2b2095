//! The fixed three-node classifier tree: a root deciding carcinoma versus
//! non-carcinoma, and one child per branch deciding between its two leaves.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datapipe::{Preprocess, SplitSpec};
use crate::error::{Error, Result};
use crate::nnet::{Network, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LeafLabel {
    Normal,
    Benign,
    InSitu,
    Invasive,
}

impl LeafLabel {
    pub const ALL: [LeafLabel; 4] = [LeafLabel::Normal, LeafLabel::Benign, LeafLabel::InSitu, LeafLabel::Invasive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<LeafLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LeafLabel::Normal => "Normal",
            LeafLabel::Benign => "Benign",
            LeafLabel::InSitu => "InSitu",
            LeafLabel::Invasive => "Invasive",
        }
    }

    pub fn is_carcinoma(self) -> bool {
        matches!(self, LeafLabel::InSitu | LeafLabel::Invasive)
    }

    /// The child node that decides this leaf.
    pub fn node(self) -> NodeId {
        if self.is_carcinoma() {
            NodeId::InvIs
        } else {
            NodeId::NorBe
        }
    }
}

impl fmt::Display for LeafLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LeafLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LeafLabel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown leaf label {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeId {
    Carci,
    NorBe,
    InvIs,
}

impl NodeId {
    pub const ALL: [NodeId; 3] = [NodeId::Carci, NodeId::NorBe, NodeId::InvIs];

    pub fn name(self) -> &'static str {
        match self {
            NodeId::Carci => "carci",
            NodeId::NorBe => "norbe",
            NodeId::InvIs => "invis",
        }
    }

    /// Output class names, index 0 first. Index 0 also wins exact ties.
    pub fn class_order(self) -> [&'static str; 2] {
        match self {
            NodeId::Carci => ["NonCarcinoma", "Carcinoma"],
            NodeId::NorBe => ["Normal", "Benign"],
            NodeId::InvIs => ["InSitu", "Invasive"],
        }
    }

    /// Binary class of a leaf at this node; `None` if the node never sees it.
    pub fn class_of(self, leaf: LeafLabel) -> Option<usize> {
        match self {
            NodeId::Carci => Some(usize::from(leaf.is_carcinoma())),
            NodeId::NorBe => match leaf {
                LeafLabel::Normal => Some(0),
                LeafLabel::Benign => Some(1),
                _ => None,
            },
            NodeId::InvIs => match leaf {
                LeafLabel::InSitu => Some(0),
                LeafLabel::Invasive => Some(1),
                _ => None,
            },
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeId::ALL
            .into_iter()
            .find(|n| n.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown node {s:?} (expected carci, norbe or invis)")))
    }
}

/// A binary classifier sitting at one node of the tree.
pub trait BinaryNode {
    fn prob(&self, x: &[f64]) -> Result<[f64; 2]>;
}

impl<T: BinaryNode + ?Sized> BinaryNode for &T {
    fn prob(&self, x: &[f64]) -> Result<[f64; 2]> {
        (**self).prob(x)
    }
}

impl BinaryNode for Network {
    fn prob(&self, x: &[f64]) -> Result<[f64; 2]> {
        let p = self.predict(&Tensor::row_vector(x))?;
        Ok([p.get(0, 0), p.get(0, 1)])
    }
}

/// Index of the larger entry; ties go to index 0.
pub fn argmax2(p: [f64; 2]) -> usize {
    usize::from(p[1] > p[0])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Version {
    pub net: Network,
    pub weight: f64,
}

/// One or more versions of a node model whose probabilities are averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEnsemble {
    versions: Vec<Version>,
}

impl NodeEnsemble {
    pub fn new(versions: Vec<Version>) -> Result<Self> {
        if versions.is_empty() {
            return Err(Error::invalid("a node ensemble needs at least one version"));
        }
        if versions.iter().any(|v| !(v.weight > 0.0) || !v.weight.is_finite()) {
            return Err(Error::invalid("ensemble weights must be positive and finite"));
        }
        let dim = versions[0].net.input_dim();
        if versions.iter().any(|v| v.net.input_dim() != dim) {
            return Err(Error::Shape("ensemble versions disagree on input width".into()));
        }
        Ok(NodeEnsemble { versions })
    }

    pub fn single(net: Network) -> Self {
        NodeEnsemble { versions: vec![Version { net, weight: 1.0 }] }
    }

    pub fn versions(&self) -> &[Version] {
        &self.versions
    }

    pub fn input_dim(&self) -> usize {
        self.versions[0].net.input_dim()
    }

    pub fn push(&mut self, version: Version) -> Result<()> {
        let mut all = std::mem::take(&mut self.versions);
        all.push(version);
        *self = NodeEnsemble::new(all)?;
        Ok(())
    }
}

impl BinaryNode for NodeEnsemble {
    fn prob(&self, x: &[f64]) -> Result<[f64; 2]> {
        let total: f64 = self.versions.iter().map(|v| v.weight).sum();
        let mut acc = [0.0; 2];
        for v in &self.versions {
            let p = v.net.prob(x)?;
            acc[0] += v.weight * p[0];
            acc[1] += v.weight * p[1];
        }
        Ok([acc[0] / total, acc[1] / total])
    }
}

/// Arithmetic mean of the versions' probability pairs.
pub fn ensemble_node_prob(versions: &[Network], x: &[f64]) -> Result<[f64; 2]> {
    if versions.is_empty() {
        return Err(Error::invalid("ensemble_node_prob needs at least one version"));
    }
    let mut acc = [0.0; 2];
    for net in versions {
        let p = net.prob(x)?;
        acc[0] += p[0];
        acc[1] += p[1];
    }
    let n = versions.len() as f64;
    Ok([acc[0] / n, acc[1] / n])
}

/// Probabilities over the four leaves, indexed by [`LeafLabel::index`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafDistribution(pub [f64; 4]);

impl LeafDistribution {
    pub fn get(&self, leaf: LeafLabel) -> f64 {
        self.0[leaf.index()]
    }

    /// Most probable leaf; the earliest label wins ties.
    pub fn argmax(&self) -> LeafLabel {
        let mut best = 0;
        for i in 1..4 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        LeafLabel::ALL[best]
    }
}

/// Chain rule over the tree: `P(leaf) = P(branch) · P(leaf | branch)`.
pub fn chain(root: [f64; 2], norbe: [f64; 2], invis: [f64; 2]) -> LeafDistribution {
    LeafDistribution([root[0] * norbe[0], root[0] * norbe[1], root[1] * invis[0], root[1] * invis[1]])
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyTree<N = NodeEnsemble> {
    pub carci: N,
    pub norbe: N,
    pub invis: N,
}

impl<N: BinaryNode> HierarchyTree<N> {
    pub fn new(carci: N, norbe: N, invis: N) -> Self {
        HierarchyTree { carci, norbe, invis }
    }

    pub fn node(&self, id: NodeId) -> &N {
        match id {
            NodeId::Carci => &self.carci,
            NodeId::NorBe => &self.norbe,
            NodeId::InvIs => &self.invis,
        }
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut N {
        match id {
            NodeId::Carci => &mut self.carci,
            NodeId::NorBe => &mut self.norbe,
            NodeId::InvIs => &mut self.invis,
        }
    }

    /// Greedy root-to-leaf routing. Only the chosen child is evaluated.
    pub fn predict_hard(&self, x: &[f64]) -> Result<LeafLabel> {
        let carcinoma = argmax2(self.carci.prob(x)?) == 1;
        let leaf = if carcinoma {
            [LeafLabel::InSitu, LeafLabel::Invasive][argmax2(self.invis.prob(x)?)]
        } else {
            [LeafLabel::Normal, LeafLabel::Benign][argmax2(self.norbe.prob(x)?)]
        };
        Ok(leaf)
    }

    pub fn predict_soft(&self, x: &[f64]) -> Result<LeafDistribution> {
        Ok(chain(self.carci.prob(x)?, self.norbe.prob(x)?, self.invis.prob(x)?))
    }
}

pub fn predict_hard<N: BinaryNode>(tree: &HierarchyTree<N>, x: &[f64]) -> Result<LeafLabel> {
    tree.predict_hard(x)
}

pub fn predict_soft<N: BinaryNode>(tree: &HierarchyTree<N>, x: &[f64]) -> Result<LeafDistribution> {
    tree.predict_soft(x)
}

/// Samples where greedy routing disagrees with the argmax of the chained
/// distribution. Purely diagnostic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub evaluated: usize,
    pub mismatches: Vec<usize>,
}

impl ConsistencyReport {
    pub fn count(&self) -> usize {
        self.mismatches.len()
    }
}

pub fn hard_soft_consistency_check<N: BinaryNode, X: AsRef<[f64]>>(
    tree: &HierarchyTree<N>,
    data: &[X],
) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport { evaluated: data.len(), mismatches: Vec::new() };
    for (i, x) in data.iter().enumerate() {
        let x = x.as_ref();
        if tree.predict_hard(x)? != tree.predict_soft(x)?.argmax() {
            report.mismatches.push(i);
        }
    }
    Ok(report)
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionEntry {
    pub path: PathBuf,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeManifest {
    pub class_order: [String; 2],
    pub versions: Vec<VersionEntry>,
}

impl NodeManifest {
    pub fn new(id: NodeId, versions: Vec<VersionEntry>) -> Self {
        NodeManifest { class_order: id.class_order().map(String::from), versions }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestNodes {
    pub carci: NodeManifest,
    pub norbe: NodeManifest,
    pub invis: NodeManifest,
}

/// Tree manifest: per node, the network files of its versions (relative to
/// the manifest's directory) and the node's class order. Also records how
/// inputs were preprocessed and split so evaluation can reproduce both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeManifest {
    pub format_version: u32,
    pub nodes: ManifestNodes,
    pub preprocess: Preprocess,
    pub split: SplitSpec,
}

impl TreeManifest {
    pub fn node(&self, id: NodeId) -> &NodeManifest {
        match id {
            NodeId::Carci => &self.nodes.carci,
            NodeId::NorBe => &self.nodes.norbe,
            NodeId::InvIs => &self.nodes.invis,
        }
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeManifest {
        match id {
            NodeId::Carci => &mut self.nodes.carci,
            NodeId::NorBe => &mut self.nodes.norbe,
            NodeId::InvIs => &mut self.nodes.invis,
        }
    }

    pub fn load(path: &Path) -> Result<TreeManifest> {
        let m: TreeManifest = crate::io::read_json(path)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported manifest format_version {}", m.format_version),
            });
        }
        for id in NodeId::ALL {
            let node = m.node(id);
            if node.class_order != id.class_order().map(String::from) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("node {id} class_order must be {:?}", id.class_order()),
                });
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    /// Loads every referenced network, resolving paths against `base`.
    pub fn build_tree(&self, base: &Path) -> Result<HierarchyTree> {
        let load = |id: NodeId| -> Result<NodeEnsemble> {
            let versions = self
                .node(id)
                .versions
                .iter()
                .map(|v| Ok(Version { net: Network::load(&base.join(&v.path))?, weight: v.weight }))
                .collect::<Result<Vec<_>>>()?;
            NodeEnsemble::new(versions)
        };
        let tree = HierarchyTree::new(load(NodeId::Carci)?, load(NodeId::NorBe)?, load(NodeId::InvIs)?);
        let dim = tree.carci.input_dim();
        if tree.norbe.input_dim() != dim || tree.invis.input_dim() != dim {
            return Err(Error::Shape("tree nodes disagree on input width".into()));
        }
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::ArchSpec;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use std::cell::Cell;

    struct Fixed([f64; 2], Cell<usize>);

    impl Fixed {
        fn new(p1: f64) -> Self {
            Fixed([1.0 - p1, p1], Cell::new(0))
        }
    }

    impl BinaryNode for Fixed {
        fn prob(&self, _x: &[f64]) -> Result<[f64; 2]> {
            self.1.set(self.1.get() + 1);
            Ok(self.0)
        }
    }

    fn tree(carci: f64, norbe: f64, invis: f64) -> HierarchyTree<Fixed> {
        HierarchyTree::new(Fixed::new(carci), Fixed::new(norbe), Fixed::new(invis))
    }

    #[test]
    fn hard_routing_examples() {
        assert_eq!(tree(0.9, 0.5, 0.8).predict_hard(&[]).unwrap(), LeafLabel::Invasive);
        let t = tree(0.4, 0.1, 0.99);
        assert_eq!(t.predict_hard(&[]).unwrap(), LeafLabel::Normal);
        assert_eq!(t.invis.1.get(), 0, "sibling must not be evaluated");
        // ties go to the first class at every node
        assert_eq!(tree(0.5, 0.5, 0.5).predict_hard(&[]).unwrap(), LeafLabel::Normal);
        assert_eq!(tree(0.6, 0.5, 0.5).predict_hard(&[]).unwrap(), LeafLabel::InSitu);
    }

    #[test]
    fn chain_rule_example() {
        // P(Carci)=0.8, P(Invasive|Carci)=0.7, P(Normal|NonCarci)=0.5
        let d = tree(0.8, 0.5, 0.7).predict_soft(&[]).unwrap();
        let want = [0.10, 0.10, 0.24, 0.56];
        for (g, w) in d.0.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        let d = tree(0.0, 0.3, 0.9).predict_soft(&[]).unwrap();
        assert_eq!(d.get(LeafLabel::InSitu), 0.0);
        assert_eq!(d.get(LeafLabel::Invasive), 0.0);
    }

    #[test]
    fn greedy_and_global_argmax_can_disagree() {
        // root (0.49, 0.51), InvIs (0.51, 0.49), NorBe (0.99, 0.01)
        let t = tree(0.51, 0.01, 0.49);
        assert_eq!(t.predict_hard(&[]).unwrap(), LeafLabel::InSitu);
        assert_eq!(t.predict_soft(&[]).unwrap().argmax(), LeafLabel::Normal);
        let report = hard_soft_consistency_check(&t, &[[0.0], [1.0]]).unwrap();
        assert_eq!(report.mismatches, vec![0, 1]);

        let confident = tree(0.1, 0.05, 0.5);
        assert_eq!(hard_soft_consistency_check(&confident, &[[0.0]]).unwrap().count(), 0);
        let empty: [[f64; 1]; 0] = [];
        assert_eq!(hard_soft_consistency_check(&confident, &empty).unwrap(), ConsistencyReport::default());
    }

    fn nets(n: usize, seed: u64) -> Vec<Network> {
        let arch = ArchSpec { input_dim: 4, stem_width: 3, blocks: 1, cardinality: 2, branch_width: 2, head_hidden: [3, 2] };
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| arch.build(&mut rng).unwrap()).collect()
    }

    #[test]
    fn ensemble_mean() {
        let x = [0.1, -0.4, 0.8, 0.3];
        let vs = nets(4, 3);
        let got = ensemble_node_prob(&vs, &x).unwrap();
        let mut sum = [0.0; 2];
        for v in &vs {
            let p = v.predict(&Tensor::row_vector(&x)).unwrap();
            sum[0] += p.get(0, 0);
            sum[1] += p.get(0, 1);
        }
        assert!((got[0] - sum[0] / 4.0).abs() < 1e-12);
        assert!((got[1] - sum[1] / 4.0).abs() < 1e-12);
        assert_eq!(ensemble_node_prob(&vs[..1], &x).unwrap(), vs[0].prob(&x).unwrap());
        assert!(ensemble_node_prob(&[], &x).is_err());

        let ens = NodeEnsemble::new(vs.into_iter().map(|net| Version { net, weight: 1.0 }).collect()).unwrap();
        let e = ens.prob(&x).unwrap();
        assert!((e[0] - got[0]).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(NodeEnsemble::new(vec![]).is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!("NorBe".parse::<NodeId>().unwrap(), NodeId::NorBe);
        assert_eq!("insitu".parse::<LeafLabel>().unwrap(), LeafLabel::InSitu);
        assert!("root".parse::<NodeId>().is_err());
    }

    proptest! {
        #[test]
        fn soft_is_a_distribution(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
            let d = tree(a, b, c).predict_soft(&[]).unwrap();
            prop_assert!(d.0.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((d.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn hard_routing_invariant_under_monotone_transform(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
            let f = |p: f64| (3.0 * p).exp() - 7.0;
            let raw = tree(a, b, c);
            let warped = HierarchyTree::new(
                Fixed([f(1.0 - a), f(a)], Cell::new(0)),
                Fixed([f(1.0 - b), f(b)], Cell::new(0)),
                Fixed([f(1.0 - c), f(c)], Cell::new(0)),
            );
            prop_assert_eq!(raw.predict_hard(&[]).unwrap(), warped.predict_hard(&[]).unwrap());
        }

        #[test]
        fn hard_routing_ignores_unchosen_child(seed in any::<u64>(), x in prop::collection::vec(-2.0f64..2.0, 4)) {
            let mut vs = nets(4, seed);
            let perturbed_src = vs.pop().unwrap();
            let t = HierarchyTree::new(vs[0].clone(), vs[1].clone(), vs[2].clone());
            let leaf = t.predict_hard(&x).unwrap();
            let mut t2 = t.clone();
            *t2.node_mut(if leaf.is_carcinoma() { NodeId::NorBe } else { NodeId::InvIs }) = perturbed_src;
            prop_assert_eq!(t2.predict_hard(&x).unwrap(), leaf);
        }
    }
}
