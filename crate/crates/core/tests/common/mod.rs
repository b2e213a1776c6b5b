//! Shared fixtures and independent oracles for the integration suites.
//!
//! Everything here is deliberately written against the public API only, and
//! the oracles recompute their answers from first principles (grid scans,
//! explicit summation loops) so they share no algebra with the library code
//! they check.
#![allow(dead_code)]

use lb2_core::factorize::{LatentFactors, TriScale};
use lb2_core::ndarray::{Array1, Array2};
use lb2_core::quantize::{binarize, CompressedLayer, Method, Provenance, QuantizedPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Brute-force minimum of the scalar sign-approximation residual
/// `f(α) = ‖u − α·sign(u)‖²`, scanned over 10 001 evenly spaced α in
/// `[0, max|u_i|]` and returned as a fraction of `‖u‖²`. The residual is
/// summed term by term for every grid point.
pub fn grid_distortion(u: &[f64]) -> f64 {
    let hi = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let energy: f64 = u.iter().map(|x| x * x).sum();
    assert!(hi > 0.0 && energy > 0.0, "oracle needs a nonzero vector");
    let steps = 10_000usize;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let alpha = hi * (i as f64) / (steps as f64);
        let resid: f64 = u
            .iter()
            .map(|&x| {
                let s = if x >= 0.0 { 1.0 } else { -1.0 };
                let d = x - alpha * s;
                d * d
            })
            .sum();
        if resid < best {
            best = resid;
        }
    }
    best / energy
}

/// Golden-section search for the minimizer of a unimodal scalar function on
/// `[a, b]`, down to an interval of width `tol`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Deterministic standard-normal matrix, filled in row-major order.
pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(rng.sample::<f64, _>(StandardNormal));
    }
    Array2::from_shape_vec((rows, cols), data).expect("length matches shape")
}

/// Deterministic standard-normal vector.
pub fn gaussian_vec(len: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_iter((0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Deterministic strictly positive vector (|N(0,1)| + 0.05).
pub fn positive_vec(len: usize, seed: u64) -> Array1<f64> {
    gaussian_vec(len, seed).mapv(|x| x.abs() + 0.05)
}

/// Spiky factor pair with a power-law column-energy profile.
///
/// Row `i` of the tall factor concentrates almost all of its mass on latent
/// column `i % rank`, with a faint dense residue so no row is identically
/// zero. Column `k` is weighted by `(k+1)^(−γ/2)`, so column energies decay
/// like `k^(−γ)`. Rows of this shape are the worst case for a single scalar
/// scale per row: λ ≈ 1 − 1/rank.
pub fn coherent_factors(
    d_out: usize,
    d_in: usize,
    rank: usize,
    gamma: f64,
    seed: u64,
) -> LatentFactors {
    let u = spiky_block(d_out, rank, gamma, seed);
    let v = spiky_block(d_in, rank, gamma, seed ^ 0x9E37_79B9_7F4A_7C15);
    LatentFactors::new(u, v).expect("fixture dimensions are valid")
}

fn spiky_block(rows: usize, rank: usize, gamma: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<f64> = (0..rank)
        .map(|k| ((k + 1) as f64).powf(-gamma / 2.0))
        .collect();
    let mut m = Array2::<f64>::zeros((rows, rank));
    for i in 0..rows {
        for j in 0..rank {
            m[[i, j]] = 1e-3 * amps[j] * rng.sample::<f64, _>(StandardNormal);
        }
        let k = i % rank;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        m[[i, k]] = sign * amps[k] * (1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal).abs());
    }
    m
}

/// Frobenius norm of an explicit dense matrix.
pub fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gaussian matrix with exact zeros and negative zeros sprinkled in so the
/// sign convention at zero gets exercised when binarized.
pub fn sign_fodder(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut m = gaussian(rows, cols, seed);
    for (idx, x) in m.iter_mut().enumerate() {
        if idx % 17 == 3 {
            *x = 0.0;
        } else if idx % 17 == 9 {
            *x = -0.0;
        }
    }
    m
}

/// Fully random compressed layer: arbitrary sign patterns and positive
/// scales, bypassing the fitting pipeline.
pub fn random_layer(
    d_out: usize,
    d_in: usize,
    rank: usize,
    paths: usize,
    seed: u64,
) -> CompressedLayer {
    let mut built = Vec::new();
    for p in 0..paths as u64 {
        let ub = binarize(sign_fodder(d_out, rank, seed ^ (p * 31 + 1)).view());
        let vb = binarize(sign_fodder(d_in, rank, seed ^ (p * 31 + 2)).view());
        let scales = TriScale::new(
            positive_vec(d_out, seed ^ (p * 31 + 3)),
            positive_vec(rank, seed ^ (p * 31 + 4)),
            positive_vec(d_in, seed ^ (p * 31 + 5)),
        )
        .unwrap();
        built.push(QuantizedPath::new(ub, vb, scales).unwrap());
    }
    CompressedLayer::new(built, Method::Standard, Provenance { seed, iterations: 0 }).unwrap()
}
