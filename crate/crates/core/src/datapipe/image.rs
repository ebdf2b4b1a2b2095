use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `height x width x channels` grid stored row-major, channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub(super) height: usize,
    pub(super) width: usize,
    pub(super) channels: usize,
    pub(super) data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid(format!("degenerate image {height}x{width}x{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Image { height, width, channels, data }
    }

    /// Bilinear sample at fractional source coordinates, clamped to the grid.
    fn sample(&self, sy: f64, sx: f64, c: usize) -> f64 {
        let sy = sy.clamp(0.0, (self.height - 1) as f64);
        let sx = sx.clamp(0.0, (self.width - 1) as f64);
        let y0 = sy.floor() as usize;
        let x0 = sx.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let (wy, wx) = (sy - y0 as f64, sx - x0 as f64);
        let top = lerp(self.get(y0, x0, c), self.get(y0, x1, c), wx);
        let bottom = lerp(self.get(y1, x0, c), self.get(y1, x1, c), wx);
        lerp(top, bottom, wy)
    }

    /// Bilinear resize with half-pixel centers.
    pub fn resize_to(&self, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("resize target must be at least 1x1"));
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        Ok(Image::from_fn(height, width, self.channels, |y, x, c| {
            self.sample((y as f64 + 0.5) * sy - 0.5, (x as f64 + 0.5) * sx - 0.5, c)
        }))
    }

    /// Scales so the short side becomes `target_short` and the long side
    /// `round(target_short · long/short)`.
    pub fn resize_preserve_ratio(&self, target_short: usize) -> Result<Image> {
        if target_short == 0 {
            return Err(Error::invalid("target_short must be >= 1"));
        }
        let short = self.height.min(self.width) as f64;
        let long_of = |side: usize| ((target_short as f64) * side as f64 / short).round() as usize;
        let (h, w) = if self.height <= self.width {
            (target_short, long_of(self.width))
        } else {
            (long_of(self.height), target_short)
        };
        self.resize_to(h, w)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({top},{left}) outside {}x{} image",
                self.height, self.width
            )));
        }
        Ok(Image::from_fn(height, width, self.channels, |y, x, c| self.get(top + y, left + x, c)))
    }

    /// Offset of a centered `side x side` crop: `(⌊(H−side)/2⌋, ⌊(W−side)/2⌋)`.
    pub fn center_offset(&self, side: usize) -> Result<(usize, usize)> {
        if side == 0 || side > self.height.min(self.width) {
            return Err(Error::invalid(format!(
                "center crop side {side} does not fit a {}x{} image",
                self.height, self.width
            )));
        }
        Ok(((self.height - side) / 2, (self.width - side) / 2))
    }

    pub fn center_crop(&self, side: usize) -> Result<Image> {
        let (top, left) = self.center_offset(side)?;
        self.crop(top, left, side, side)
    }

    /// Quarter turn clockwise; height and width swap.
    pub fn rot90(&self) -> Image {
        Image::from_fn(self.width, self.height, self.channels, |y, x, c| self.get(self.height - 1 - x, y, c))
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, self.channels, |y, x, c| self.get(y, self.width - 1 - x, c))
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Image {
        Image::from_fn(self.height, self.width, self.channels, |y, x, c| self.get(self.height - 1 - y, x, c))
    }

    /// Rotation about the image center by `degrees` (counter-clockwise),
    /// bilinear, with reflection padding. Dimensions are kept.
    pub fn rotate(&self, degrees: f64) -> Image {
        let (sin, cos) = degrees.to_radians().sin_cos();
        let cy = (self.height as f64 - 1.0) / 2.0;
        let cx = (self.width as f64 - 1.0) / 2.0;
        Image::from_fn(self.height, self.width, self.channels, |y, x, c| {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            self.sample(reflect(sy, self.height), reflect(sx, self.width), c)
        })
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + (b - a) * t;
    v.clamp(a.min(b), a.max(b))
}

/// Mirrors a coordinate back into `[0, n−1]`.
fn reflect(v: f64, n: usize) -> f64 {
    let max = (n - 1) as f64;
    if max == 0.0 {
        return 0.0;
    }
    let period = 2.0 * max;
    let m = v.rem_euclid(period);
    if m > max {
        period - m
    } else {
        m
    }
}

/// Resize-then-center-crop applied once to every image, followed by a
/// per-pixel `(v - mean) / std` when turning images into network inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    pub resize_short: usize,
    pub crop: usize,
    #[serde(default = "default_mean")]
    pub mean: f64,
    #[serde(default = "default_std")]
    pub std: f64,
}

fn default_mean() -> f64 {
    0.5
}

fn default_std() -> f64 {
    0.25
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess { resize_short: 24, crop: 16, mean: default_mean(), std: default_std() }
    }
}

impl Preprocess {
    pub fn validate(&self) -> Result<()> {
        if self.resize_short == 0 || self.crop == 0 || self.crop > self.resize_short {
            return Err(Error::invalid("preprocess needs 1 <= crop <= resize_short"));
        }
        if !(self.mean.is_finite() && self.std.is_finite() && self.std > 0.0) {
            return Err(Error::invalid("preprocess needs a finite mean and std > 0"));
        }
        Ok(())
    }

    /// Resize so the short side is `resize_short`, then center crop.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        img.resize_preserve_ratio(self.resize_short)?.center_crop(self.crop)
    }

    pub fn normalize(&self, img: &Image) -> Image {
        let (m, s) = (self.mean, self.std);
        img.map(|v| (v - m) / s)
    }

    /// [`Preprocess::apply`] then [`Preprocess::normalize`].
    pub fn network_input(&self, img: &Image) -> Result<Image> {
        Ok(self.normalize(&self.apply(img)?))
    }

    /// Flattened feature width produced for images with `channels` channels.
    pub fn output_len(&self, channels: usize) -> usize {
        self.crop * self.crop * channels
    }
}

pub fn resize_preserve_ratio(img: &Image, target_short: usize) -> Result<Image> {
    img.resize_preserve_ratio(target_short)
}

pub fn center_crop(img: &Image, side: usize) -> Result<Image> {
    img.center_crop(side)
}
