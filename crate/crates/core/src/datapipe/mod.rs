//! Synthetic data, preprocessing, augmentation, splitting and per-node
//! relabeling.

mod augment;
mod image;
mod node;
mod split;
pub mod store;
mod synth;

pub use augment::{augment, AugmentConfig, RotationMode};
pub use image::{center_crop, resize_preserve_ratio, Image, Preprocess};
pub use node::{class_counts, labels, merge_auxiliary, node_label, node_relabel, NodeSample};
pub use split::{allocate_train_counts, stratified_split, Split, SplitSpec};
pub use synth::{
    generate_auxiliary, generate_pretext, generate_synthetic, AuxLabel, AuxSpec, DatasetSpec, LabeledImage,
    PretextSpec, SampleLabel, Source,
};
