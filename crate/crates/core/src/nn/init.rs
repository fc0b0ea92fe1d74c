//! Parameter initializers.

use rand::Rng;

use super::{Real, Tensor};

pub fn uniform<T: Real, R: Rng>(rows: usize, cols: usize, limit: f64, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| T::lit(rng.gen_range(-limit..=limit)))
}

/// Recurrent weights: uniform(−0.08, 0.08).
pub fn recurrent<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    uniform(rows, cols, 0.08, rng)
}

/// Glorot-uniform with `fan_in = rows`, `fan_out = cols`.
pub fn glorot<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let limit = num_traits::Float::sqrt(6.0 / (rows + cols).max(1) as f64);
    uniform(rows, cols, limit, rng)
}

