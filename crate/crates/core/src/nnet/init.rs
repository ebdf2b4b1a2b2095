use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Tensor;
use crate::error::{Error, Result};

/// He/Kaiming normal initialization: every entry drawn from `Normal(0, 2/fan_in)`.
pub fn kaiming_init<R: Rng + ?Sized>(
    fan_in: usize,
    shape: (usize, usize),
    rng: &mut R,
) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::invalid("kaiming_init requires fan_in >= 1"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
    let data = (0..shape.0 * shape.1).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(shape.0, shape.1, data)
}

/// Biases start at zero.
pub fn zero_bias(width: usize) -> Tensor {
    Tensor::zeros(1, width)
}
