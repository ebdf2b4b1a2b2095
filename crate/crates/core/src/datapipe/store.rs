//! On-disk dataset: one directory per class holding `.bin` samples, plus a
//! `manifest.json`.
//!
//! Sample layout: `b"HIMG"`, then height, width, channels as little-endian
//! u32, then `h*w*c` little-endian f64 values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AuxLabel, AuxSpec, DatasetSpec, Image, LabeledImage, SampleLabel};
use crate::error::{Error, Result};
use crate::hierarchy::LeafLabel;
use crate::io::{read_json, write_atomic, write_json};

pub const MAGIC: &[u8; 4] = b"HIMG";
pub const STORE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreManifest {
    pub format_version: u32,
    pub seed: u64,
    pub spec: DatasetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<AuxSpec>,
    /// `(class directory, sample count)` in directory order.
    pub counts: Vec<(String, usize)>,
}

pub fn class_dir(label: SampleLabel) -> &'static str {
    match label {
        SampleLabel::Leaf(LeafLabel::Normal) => "normal",
        SampleLabel::Leaf(LeafLabel::Benign) => "benign",
        SampleLabel::Leaf(LeafLabel::InSitu) => "insitu",
        SampleLabel::Leaf(LeafLabel::Invasive) => "invasive",
        SampleLabel::Aux(AuxLabel::BenignAux) => "aux_benign",
        SampleLabel::Aux(AuxLabel::MalignantAux) => "aux_malignant",
    }
}

pub const CLASS_DIRS: [(&str, SampleLabel); 6] = [
    ("normal", SampleLabel::Leaf(LeafLabel::Normal)),
    ("benign", SampleLabel::Leaf(LeafLabel::Benign)),
    ("insitu", SampleLabel::Leaf(LeafLabel::InSitu)),
    ("invasive", SampleLabel::Leaf(LeafLabel::Invasive)),
    ("aux_benign", SampleLabel::Aux(AuxLabel::BenignAux)),
    ("aux_malignant", SampleLabel::Aux(AuxLabel::MalignantAux)),
];

pub fn encode_image(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * img.len());
    out.extend_from_slice(MAGIC);
    for d in [img.height(), img.width(), img.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8], path: &Path) -> Result<Image> {
    let bad = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing HIMG header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h.checked_mul(w).and_then(|x| x.checked_mul(c)).ok_or_else(|| bad("dimension overflow".into()))?;
    if bytes.len() != 16 + 8 * n {
        return Err(bad(format!("expected {} payload bytes for {h}x{w}x{c}, found {}", 8 * n, bytes.len() - 16)));
    }
    let data = bytes[16..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Image::new(h, w, c, data).map_err(|e| bad(e.to_string()))
}

/// Writes `samples` under `dir`, numbering files within each class in input
/// order.
pub fn write_dataset(dir: &Path, spec: &DatasetSpec, aux: Option<&AuxSpec>, samples: &[LabeledImage]) -> Result<StoreManifest> {
    let mut counts: Vec<(String, usize)> = CLASS_DIRS.iter().map(|(d, _)| (d.to_string(), 0)).collect();
    for s in samples {
        let name = class_dir(s.label);
        let slot = counts.iter_mut().find(|(d, _)| d == name).expect("every label has a directory");
        let path = dir.join(name).join(format!("{:05}.bin", slot.1));
        write_atomic(&path, &encode_image(&s.pixels))?;
        slot.1 += 1;
    }
    counts.retain(|(_, n)| *n > 0);
    let manifest = StoreManifest { format_version: STORE_VERSION, seed: spec.seed, spec: spec.clone(), aux: aux.cloned(), counts };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads a dataset written by [`write_dataset`], in class-directory order.
pub fn read_dataset(dir: &Path) -> Result<(StoreManifest, Vec<LabeledImage>)> {
    let manifest: StoreManifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format_version != STORE_VERSION {
        return Err(Error::Format {
            path: dir.join("manifest.json"),
            msg: format!("unsupported format_version {}", manifest.format_version),
        });
    }
    let mut out = Vec::new();
    for (name, count) in &manifest.counts {
        let label = CLASS_DIRS
            .iter()
            .find(|(d, _)| d == name)
            .map(|(_, l)| *l)
            .ok_or_else(|| Error::Format { path: dir.join("manifest.json"), msg: format!("unknown class directory {name}") })?;
        for i in 0..*count {
            let path = dir.join(name).join(format!("{i:05}.bin"));
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.push(LabeledImage { pixels: decode_image(&bytes, &path)?, label });
        }
    }
    Ok((manifest, out))
}
