use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RotationMode {
    RightAngle,
    /// Uniform angle in `[-max_degrees, max_degrees]`, reflection padded.
    Arbitrary { max_degrees: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub p_rotate: f64,
    pub rotation: RotationMode,
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub p_crop: f64,
    /// Side of the random square crop. `None` means 3/4 of the short side.
    pub crop_size: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_rotate: 0.5,
            rotation: RotationMode::RightAngle,
            p_hflip: 0.5,
            p_vflip: 0.5,
            p_crop: 0.25,
            crop_size: None,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig { p_rotate: 0.0, p_hflip: 0.0, p_vflip: 0.0, p_crop: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_rotate", self.p_rotate), ("p_hflip", self.p_hflip), ("p_vflip", self.p_vflip), ("p_crop", self.p_crop)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if let RotationMode::Arbitrary { max_degrees } = self.rotation {
            if !max_degrees.is_finite() || max_degrees < 0.0 {
                return Err(Error::invalid("max_degrees must be finite and >= 0"));
            }
        }
        if self.crop_size == Some(0) {
            return Err(Error::invalid("crop_size must be >= 1"));
        }
        Ok(())
    }

    fn crop_side(&self, img: &Image) -> Result<usize> {
        let short = img.height().min(img.width());
        match self.crop_size {
            Some(s) if s > short => Err(Error::invalid(format!(
                "crop size {s} exceeds image {}x{}",
                img.height(),
                img.width()
            ))),
            Some(s) => Ok(s),
            None => Ok((short * 3 / 4).max(1)),
        }
    }
}

fn coin<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    // always draw so the stream position does not depend on p
    let u: f64 = rng.random();
    u < p
}

/// Random rotation, reflections and crop, each applied with its configured
/// probability. The output has the input's shape.
pub fn augment<R: Rng + ?Sized>(img: &Image, cfg: &AugmentConfig, rng: &mut R) -> Result<Image> {
    cfg.validate()?;
    let side = cfg.crop_side(img)?;
    let mut out = img.clone();
    if coin(rng, cfg.p_rotate) {
        out = match cfg.rotation {
            RotationMode::RightAngle => {
                let quarter = rng.random_range(0..4u8);
                let mut r = out;
                if r.height() != r.width() && quarter % 2 == 1 {
                    // a 90° turn would change the shape of a non-square image
                    r = r.rot90().rot90();
                } else {
                    for _ in 0..quarter {
                        r = r.rot90();
                    }
                }
                r
            }
            RotationMode::Arbitrary { max_degrees } => {
                let deg = if max_degrees > 0.0 { rng.random_range(-max_degrees..=max_degrees) } else { 0.0 };
                out.rotate(deg)
            }
        };
    }
    if coin(rng, cfg.p_hflip) {
        out = out.flip_horizontal();
    }
    if coin(rng, cfg.p_vflip) {
        out = out.flip_vertical();
    }
    if coin(rng, cfg.p_crop) {
        let top = rng.random_range(0..=out.height() - side);
        let left = rng.random_range(0..=out.width() - side);
        out = out.crop(top, left, side, side)?.resize_to(img.height(), img.width())?;
    }
    Ok(out)
}
