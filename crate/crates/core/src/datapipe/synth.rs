//! Synthetic stand-in for the histology data.
//!
//! Every image is a mid-grey field with centered cosine gratings:
//! - a low-frequency axis grating present in all classes,
//! - a diagonal/anti-diagonal grating at `carcinoma_freq` marking the carcinoma
//!   superclass (InSitu, Invasive),
//! - an axis grating at `sibling_freq` marking the second leaf of each
//!   superclass (Benign, Invasive).
//!
//! Each grating carries a small per-sample phase jitter and pixels get
//! additive Gaussian noise, clamped to `[0, 1]`. Gratings are centered, so the
//! class patterns are symmetric under right-angle rotations and reflections.
//! Sample `i` draws from its own ChaCha stream, so generation is independent
//! of evaluation order.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::hierarchy::LeafLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuxLabel {
    BenignAux,
    MalignantAux,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Primary,
    Auxiliary,
}

/// Primary samples carry a leaf label; auxiliary samples only a coarse
/// benign/malignant label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleLabel {
    Leaf(LeafLabel),
    Aux(AuxLabel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub pixels: Image,
    pub label: SampleLabel,
}

impl LabeledImage {
    pub fn source(&self) -> Source {
        match self.label {
            SampleLabel::Leaf(_) => Source::Primary,
            SampleLabel::Aux(_) => Source::Auxiliary,
        }
    }

    pub fn leaf(&self) -> Option<LeafLabel> {
        match self.label {
            SampleLabel::Leaf(l) => Some(l),
            SampleLabel::Aux(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub n_per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
    pub noise: f64,
    /// Half-width (radians) of the uniform per-grating phase jitter.
    pub phase_jitter: f64,
    pub background_amp: f64,
    pub carcinoma_amp: f64,
    pub sibling_amp: f64,
    pub background_freq: usize,
    pub carcinoma_freq: usize,
    pub sibling_freq: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_per_class: 25,
            height: 32,
            width: 32,
            channels: 3,
            seed: 0,
            noise: 0.1,
            phase_jitter: 0.5,
            background_amp: 0.1,
            carcinoma_amp: 0.2,
            sibling_amp: 0.2,
            background_freq: 1,
            carcinoma_freq: 4,
            sibling_freq: 2,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 4 {
            return Err(Error::invalid("n_per_class must be >= 4"));
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        let nyquist = self.height.min(self.width) / 2;
        let freqs = [self.background_freq, self.carcinoma_freq, self.sibling_freq];
        if freqs.iter().any(|&f| f == 0 || f >= nyquist.max(1)) {
            return Err(Error::invalid(format!("grating frequencies must lie in 1..{nyquist}")));
        }
        if self.background_freq == self.sibling_freq {
            return Err(Error::invalid("background and sibling frequencies must differ"));
        }
        if !(self.noise >= 0.0) || !(self.phase_jitter >= 0.0) {
            return Err(Error::invalid("noise and phase_jitter must be >= 0"));
        }
        let amps = [self.background_amp, self.carcinoma_amp, self.sibling_amp];
        if amps.iter().any(|a| !(*a >= 0.0)) || amps.iter().sum::<f64>() > 0.5 {
            return Err(Error::invalid("grating amplitudes must be >= 0 and sum to at most 0.5"));
        }
        Ok(())
    }

    fn sample_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// One image of the given leaf, drawn from stream `stream`.
    pub fn render(&self, leaf: LeafLabel, stream: u64) -> Image {
        let mut rng = self.sample_rng(stream);
        let mut jitter = || self.phase_jitter * rng.random_range(-1.0..=1.0);
        let phases: [f64; 6] = std::array::from_fn(|_| jitter());
        let carcinoma = leaf.is_carcinoma();
        let sibling = matches!(leaf, LeafLabel::Benign | LeafLabel::Invasive);
        let (h, w) = (self.height as f64, self.width as f64);
        let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
        let mut data = Vec::with_capacity(self.height * self.width * self.channels);
        for y in 0..self.height {
            for x in 0..self.width {
                let u = (x as f64 - cx) / w;
                let v = (y as f64 - cy) / h;
                let axis = |f: usize, pu: f64, pv: f64| {
                    0.5 * ((TAU * f as f64 * u + pu).cos() + (TAU * f as f64 * v + pv).cos())
                };
                let mut value = 0.5 + self.background_amp * axis(self.background_freq, phases[0], phases[1]);
                if carcinoma {
                    let f = TAU * self.carcinoma_freq as f64;
                    value += self.carcinoma_amp
                        * 0.5
                        * ((f * (u + v) + phases[2]).cos() + (f * (u - v) + phases[3]).cos());
                }
                if sibling {
                    value += self.sibling_amp * axis(self.sibling_freq, phases[4], phases[5]);
                }
                for _ in 0..self.channels {
                    let n: f64 = if self.noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                    data.push((value + self.noise * n).clamp(0.0, 1.0));
                }
            }
        }
        Image { height: self.height, width: self.width, channels: self.channels, data }
    }
}

/// Exactly `n_per_class` images per leaf, grouped by leaf in label order.
pub fn generate_synthetic(spec: &DatasetSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    let n = spec.n_per_class;
    Ok(LeafLabel::ALL
        .iter()
        .flat_map(|&leaf| {
            (0..n).map(move |i| LabeledImage {
                pixels: spec.render(leaf, (leaf.index() * n + i) as u64),
                label: SampleLabel::Leaf(leaf),
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxSpec {
    pub n_benign: usize,
    pub n_malignant: usize,
}

/// Auxiliary images from the same generator family on separate streams.
/// Benign images render as the Benign leaf; malignant ones alternate between
/// InSitu and Invasive. Only the coarse label is kept.
pub fn generate_auxiliary(spec: &DatasetSpec, aux: &AuxSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    const AUX_STREAM: u64 = 1 << 40;
    let benign = (0..aux.n_benign).map(|i| LabeledImage {
        pixels: spec.render(LeafLabel::Benign, AUX_STREAM + i as u64),
        label: SampleLabel::Aux(AuxLabel::BenignAux),
    });
    let malignant = (0..aux.n_malignant).map(|i| {
        let leaf = if i % 2 == 0 { LeafLabel::InSitu } else { LeafLabel::Invasive };
        LabeledImage {
            pixels: spec.render(leaf, AUX_STREAM + (aux.n_benign + i) as u64),
            label: SampleLabel::Aux(AuxLabel::MalignantAux),
        }
    });
    Ok(benign.chain(malignant).collect())
}

/// Generic pretraining task: each image holds `1..=max_gratings` centered
/// gratings, each with a random orientation (horizontal, vertical, diagonal
/// or anti-diagonal), frequency in `1..=max_freq` and amplitude drawn from
/// `amp_range` (the total is capped at 0.5). The label says whether any
/// grating has frequency at least `high_from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretextSpec {
    pub n: usize,
    pub seed: u64,
    pub noise: f64,
    pub max_freq: usize,
    pub high_from: usize,
    pub amp_range: [f64; 2],
    pub max_gratings: usize,
}

impl Default for PretextSpec {
    fn default() -> Self {
        PretextSpec { n: 400, seed: 0, noise: 0.1, max_freq: 6, high_from: 3, amp_range: [0.15, 0.35], max_gratings: 1 }
    }
}

pub fn generate_pretext(spec: &PretextSpec, height: usize, width: usize, channels: usize) -> Result<Vec<(Image, usize)>> {
    if spec.max_freq == 0 || spec.high_from == 0 || spec.high_from > spec.max_freq {
        return Err(Error::invalid("pretext needs 1 <= high_from <= max_freq"));
    }
    if spec.max_gratings == 0 {
        return Err(Error::invalid("pretext needs max_gratings >= 1"));
    }
    if !(spec.amp_range[0] >= 0.0 && spec.amp_range[0] <= spec.amp_range[1] && spec.amp_range[1] <= 0.5) {
        return Err(Error::invalid("pretext amp_range must satisfy 0 <= lo <= hi <= 0.5"));
    }
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::invalid("image dimensions must be >= 1"));
    }
    let (h, w) = (height as f64, width as f64);
    let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    let mut out = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let k = rng.random_range(1..=spec.max_gratings);
        let mut gratings = Vec::with_capacity(k);
        for _ in 0..k {
            let freq = rng.random_range(1..=spec.max_freq);
            let orient = rng.random_range(0..4);
            let amp = rng.random_range(spec.amp_range[0]..=spec.amp_range[1]);
            let phase = rng.random_range(-0.5..=0.5);
            gratings.push((freq, orient, amp, phase));
        }
        let total: f64 = gratings.iter().map(|g| g.2).sum();
        let scale = if total > 0.5 { 0.5 / total } else { 1.0 };
        let high = gratings.iter().any(|g| g.0 >= spec.high_from);
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                let u = (x as f64 - cx) / w;
                let v = (y as f64 - cy) / h;
                let mut value = 0.5;
                for &(freq, orient, amp, phase) in &gratings {
                    let t = match orient {
                        0 => u,
                        1 => v,
                        2 => u + v,
                        _ => u - v,
                    };
                    value += scale * amp * (TAU * freq as f64 * t + phase).cos();
                }
                for _ in 0..channels {
                    let n: f64 = if spec.noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                    data.push((value + spec.noise * n).clamp(0.0, 1.0));
                }
            }
        }
        out.push((Image { height, width, channels, data }, usize::from(high)));
    }
    Ok(out)
}
