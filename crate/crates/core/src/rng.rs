//! Seeded random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 stream keyed by a
//! `u64` seed and a stream number, so one master seed reproduces an entire
//! ensemble bit-for-bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::gradcore::Tensor;

pub type SeededRng = ChaCha8Rng;

/// Stream numbers used for independent purposes under one seed.
pub mod stream {
    pub const INIT_ENCODER: u64 = 1;
    pub const INIT_DECODER: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const SCORE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const LABELED: u64 = 6;
    pub const POLLUTE: u64 = 7;
    pub const SYNTH: u64 = 8;
}

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard-normal tensor of the given shape.
pub fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

pub fn shuffled_indices<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
