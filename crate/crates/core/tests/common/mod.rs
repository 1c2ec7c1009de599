#![allow(dead_code)]

pub mod algebra;
pub mod collapse;
pub mod fixture;
pub mod gradient_suite;
pub mod oracles;

use convrr::embedding::TextMatrix;
use convrr::numerics::{l2_normalize, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn text(k: usize, d: usize, rng: &mut ChaCha8Rng) -> TextMatrix {
    TextMatrix::new(uniform(&[k, d], -1.0, 1.0, rng)).unwrap()
}

pub fn unit(d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    l2_normalize(&uniform(&[d], -1.0, 1.0, rng)).unwrap()
}

/// `Σ g ⊙ y`, the scalar whose gradient with respect to `y` is `g`.
pub fn contract(g: &Tensor, y: &Tensor) -> f64 {
    g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}
