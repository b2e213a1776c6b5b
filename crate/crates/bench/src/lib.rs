//! Fixture builders shared by the forward-pass benchmarks.

use lb2_core::ndarray::Array1;
use lb2_core::quantize::{compress_layer, CompressedLayer, Method};
use lb2_core::spectral::{synth_power_law, SpectrumModel};
use lb2_core::WeightMatrix;
use rand::{Rng, SeedableRng};

/// A synthetic power-law matrix and its one-path compression at the given
/// budget, both fully determined by the seed.
pub fn power_law_layer(
    d_out: usize,
    d_in: usize,
    gamma: f64,
    bpp: f64,
    seed: u64,
) -> (WeightMatrix, CompressedLayer) {
    let model = SpectrumModel::new(gamma, 1.0, d_out.min(d_in)).expect("valid spectrum");
    let w = synth_power_law(d_out, d_in, &model, seed).expect("valid shape");
    let layer =
        compress_layer(&w, bpp, Method::Standard, false, seed, 0).expect("affordable budget");
    (w, layer)
}

/// A fixed pseudo-random input vector.
pub fn input_vector(d_in: usize, seed: u64) -> Array1<f64> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    Array1::from_shape_fn(d_in, |_| rng.random_range(-1.0..1.0))
}
