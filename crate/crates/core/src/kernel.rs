//! Forward pass over packed layers without unpacking.
//!
//! A ±1 matvec needs no multiplies: with `S = Σ_j x_j` precomputed,
//! `y_i = Σ_j b_ij·x_j = 2·(Σ_{j: b_ij = +1} x_j) − S`, and the masked sum
//! walks set bits word by word. A full layer application is then five cheap
//! stages, `y = h ⊙ (U_b · (l ⊙ (V_bᵀ · (g ⊙ x))))`, summed over paths.
//! All accumulation runs in f64 regardless of how scales are stored.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};

use crate::linalg::{gaussian_vec, seeded_rng};
use crate::quantize::{decompress, CompressedLayer, PackedBinaryFactor};
use crate::{Error, Result};

/// Reusable intermediate buffers for [`layer_forward`]; single-owner,
/// lengths fixed to one layer shape.
#[derive(Debug, Clone)]
pub struct ForwardScratch {
    in_buf: Vec<f64>,
    lat_buf: Vec<f64>,
    out_buf: Vec<f64>,
}

impl ForwardScratch {
    pub fn for_layer(layer: &CompressedLayer) -> Self {
        Self {
            in_buf: vec![0.0; layer.d_in()],
            lat_buf: vec![0.0; layer.rank()],
            out_buf: vec![0.0; layer.d_out()],
        }
    }

    fn matches(&self, layer: &CompressedLayer) -> bool {
        self.in_buf.len() == layer.d_in()
            && self.lat_buf.len() == layer.rank()
            && self.out_buf.len() == layer.d_out()
    }
}

fn row_masked_sum(words: &[u64], x: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (wi, &w) in words.iter().enumerate() {
        let base = wi * 64;
        let mut bits = w;
        while bits != 0 {
            acc += x[base + bits.trailing_zeros() as usize];
            bits &= bits - 1;
        }
    }
    acc
}

/// `y = B·x` for the packed sign matrix, into a caller buffer.
pub fn packed_matvec_into(
    factor: &PackedBinaryFactor,
    x: &[f64],
    y: &mut [f64],
) -> Result<()> {
    if x.len() != factor.cols() || y.len() != factor.rows() {
        return Err(Error::DimensionMismatch(format!(
            "matvec shapes: factor {}x{}, x {}, y {}",
            factor.rows(),
            factor.cols(),
            x.len(),
            y.len()
        )));
    }
    let total: f64 = x.iter().sum();
    let wpr = factor.words_per_row();
    let words = factor.words();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = 2.0 * row_masked_sum(&words[i * wpr..(i + 1) * wpr], x) - total;
    }
    Ok(())
}

/// `y = B·x` for the packed sign matrix `B` (+1 where the bit is set).
pub fn packed_matvec(factor: &PackedBinaryFactor, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let xs = x.as_standard_layout();
    let mut y = vec![0.0f64; factor.rows()];
    packed_matvec_into(factor, xs.as_slice().unwrap(), &mut y)?;
    Ok(Array1::from_vec(y))
}

/// `y = Bᵀ·x`: the same masked-sum identity applied column-wise, scattering
/// each row's contribution instead of gathering.
pub fn packed_matvec_t_into(
    factor: &PackedBinaryFactor,
    x: &[f64],
    y: &mut [f64],
) -> Result<()> {
    if x.len() != factor.rows() || y.len() != factor.cols() {
        return Err(Error::DimensionMismatch(format!(
            "transposed matvec shapes: factor {}x{}, x {}, y {}",
            factor.rows(),
            factor.cols(),
            x.len(),
            y.len()
        )));
    }
    let total: f64 = x.iter().sum();
    y.fill(0.0);
    let wpr = factor.words_per_row();
    let words = factor.words();
    for (j, &xv) in x.iter().enumerate() {
        for (wi, &w) in words[j * wpr..(j + 1) * wpr].iter().enumerate() {
            let base = wi * 64;
            let mut bits = w;
            while bits != 0 {
                y[base + bits.trailing_zeros() as usize] += xv;
                bits &= bits - 1;
            }
        }
    }
    for yk in y.iter_mut() {
        *yk = 2.0 * *yk - total;
    }
    Ok(())
}

/// `y = Bᵀ·x` for the packed sign matrix.
pub fn packed_matvec_t(factor: &PackedBinaryFactor, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let xs = x.as_standard_layout();
    let mut y = vec![0.0f64; factor.cols()];
    packed_matvec_t_into(factor, xs.as_slice().unwrap(), &mut y)?;
    Ok(Array1::from_vec(y))
}

/// Applies the layer to `x` without unpacking, accumulating paths into `y`.
pub fn layer_forward_into(
    layer: &CompressedLayer,
    x: &[f64],
    scratch: &mut ForwardScratch,
    y: &mut [f64],
) -> Result<()> {
    if x.len() != layer.d_in() || y.len() != layer.d_out() {
        return Err(Error::DimensionMismatch(format!(
            "forward shapes: layer {}x{}, x {}, y {}",
            layer.d_out(),
            layer.d_in(),
            x.len(),
            y.len()
        )));
    }
    if !scratch.matches(layer) {
        return Err(Error::DimensionMismatch(
            "scratch buffers sized for a different layer".into(),
        ));
    }
    y.fill(0.0);
    for path in layer.paths() {
        let s = path.scales();
        let g = s.g();
        let l = s.l();
        let h = s.h();
        for (j, b) in scratch.in_buf.iter_mut().enumerate() {
            *b = g[j] * x[j];
        }
        packed_matvec_t_into(path.v_binary(), &scratch.in_buf, &mut scratch.lat_buf)?;
        for (k, b) in scratch.lat_buf.iter_mut().enumerate() {
            *b *= l[k];
        }
        packed_matvec_into(path.u_binary(), &scratch.lat_buf, &mut scratch.out_buf)?;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h[i] * scratch.out_buf[i];
        }
    }
    Ok(())
}

/// Allocating wrapper over [`layer_forward_into`].
pub fn layer_forward(
    layer: &CompressedLayer,
    x: ArrayView1<'_, f64>,
    scratch: &mut ForwardScratch,
) -> Result<Array1<f64>> {
    let xs = x.as_standard_layout();
    let mut y = vec![0.0f64; layer.d_out()];
    layer_forward_into(layer, xs.as_slice().unwrap(), scratch, &mut y)?;
    Ok(Array1::from_vec(y))
}

/// Wall-time comparison of the packed forward pass against a dense f64
/// matvec of the same shape. Informational; no pass/fail semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub d_out: usize,
    pub d_in: usize,
    pub rank: usize,
    pub paths: usize,
    pub median_ns: f64,
    pub p95_ns: f64,
    pub dense_median_ns: f64,
    /// Dense GEMV cost at this shape, `2·d_out·d_in` (mul + add per entry).
    pub dense_flops: u64,
    /// Packed cost in add-equivalents per path set, `2r(d_in + d_out)`.
    pub packed_add_ops: u64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Times `trials` runs of [`layer_forward_into`] and of a plain dense
/// matvec against the decompressed matrix, on a fixed pseudo-random input.
pub fn bench_forward(layer: &CompressedLayer, trials: usize) -> Result<TimingReport> {
    if trials == 0 {
        return Err(Error::OutOfRange("need at least one trial".into()));
    }
    let mut rng = seeded_rng(0x42EC);
    let x = gaussian_vec(layer.d_in(), &mut rng);
    let xs = x.as_slice().unwrap();
    let mut scratch = ForwardScratch::for_layer(layer);
    let mut y = vec![0.0f64; layer.d_out()];

    layer_forward_into(layer, xs, &mut scratch, &mut y)?; // warm caches
    let mut packed_ns = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t0 = Instant::now();
        layer_forward_into(layer, xs, &mut scratch, &mut y)?;
        std::hint::black_box(&y);
        packed_ns.push(t0.elapsed().as_nanos() as f64);
    }

    let dense = decompress(layer);
    let dw = dense.as_slice().expect("decompress is standard layout");
    let d_in = layer.d_in();
    let dense_matvec = |y: &mut [f64]| {
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &dw[i * d_in..(i + 1) * d_in];
            let mut acc = 0.0f64;
            for (w, xv) in row.iter().zip(xs) {
                acc += w * xv;
            }
            *yi = acc;
        }
    };
    dense_matvec(&mut y);
    let mut dense_ns = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t0 = Instant::now();
        dense_matvec(&mut y);
        std::hint::black_box(&y);
        dense_ns.push(t0.elapsed().as_nanos() as f64);
    }

    packed_ns.sort_by(f64::total_cmp);
    dense_ns.sort_by(f64::total_cmp);
    Ok(TimingReport {
        d_out: layer.d_out(),
        d_in: layer.d_in(),
        rank: layer.rank(),
        paths: layer.paths().len(),
        median_ns: percentile(&packed_ns, 0.5),
        p95_ns: percentile(&packed_ns, 0.95),
        dense_median_ns: percentile(&dense_ns, 0.5),
        dense_flops: 2 * layer.d_out() as u64 * layer.d_in() as u64,
        packed_add_ops: 2
            * layer.rank() as u64
            * (layer.d_in() as u64 + layer.d_out() as u64),
    })
}
