use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::tensor::Tensor;

/// The one generator type used for all randomness in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Glorot/Xavier uniform: entries in `±sqrt(6 / (fan_in + fan_out))`, where a
/// `rows × cols` weight maps `rows` inputs to `cols` outputs.
pub fn xavier_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

pub fn xavier_init(shape: (usize, usize), seed: u64) -> Tensor {
    let mut rng = seeded_rng(seed);
    Tensor::new(xavier_uniform(&mut rng, shape.0, shape.1)).expect("uniform draws are finite")
}
