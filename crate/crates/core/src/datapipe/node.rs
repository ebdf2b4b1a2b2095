use super::{AuxLabel, Image, LabeledImage, SampleLabel};
use crate::hierarchy::NodeId;

/// A sample relabeled for one binary node. `label` indexes the node's
/// class order.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSample {
    pub image: Image,
    pub label: usize,
}

/// Binary label of a sample at `node`, or `None` when the node does not see it.
pub fn node_label(label: SampleLabel, node: NodeId) -> Option<usize> {
    match label {
        SampleLabel::Leaf(leaf) => node.class_of(leaf),
        SampleLabel::Aux(aux) => match (node, aux) {
            (NodeId::Carci, AuxLabel::BenignAux) => Some(0),
            (NodeId::Carci, AuxLabel::MalignantAux) => Some(1),
            (NodeId::NorBe, AuxLabel::BenignAux) => Some(1),
            _ => None,
        },
    }
}

/// Primary samples only, relabeled for `node`. Auxiliary samples are dropped.
pub fn node_relabel(data: &[LabeledImage], node: NodeId) -> Vec<NodeSample> {
    data.iter()
        .filter(|s| matches!(s.label, SampleLabel::Leaf(_)))
        .filter_map(|s| node_label(s.label, node).map(|label| NodeSample { image: s.pixels.clone(), label }))
        .collect()
}

/// Relabeled primary samples followed by the auxiliary samples the node uses.
pub fn merge_auxiliary(primary: &[LabeledImage], aux: &[LabeledImage], node: NodeId) -> Vec<NodeSample> {
    let mut out = node_relabel(primary, node);
    out.extend(aux.iter().filter(|s| matches!(s.label, SampleLabel::Aux(_))).filter_map(|s| {
        node_label(s.label, node).map(|label| NodeSample { image: s.pixels.clone(), label })
    }));
    out
}

pub fn labels(data: &[NodeSample]) -> Vec<usize> {
    data.iter().map(|s| s.label).collect()
}

pub fn class_counts(data: &[NodeSample]) -> [usize; 2] {
    let mut c = [0; 2];
    for s in data {
        c[s.label] += 1;
    }
    c
}
