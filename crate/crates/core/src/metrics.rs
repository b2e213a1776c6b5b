//! Distortion, coherence, and reconstruction-error diagnostics.
//!
//! The central quantity is the local distortion coefficient of a vector `u`
//! of length `r`:
//!
//! ```text
//! λ(u) = 1 − (1/r) · (‖u‖₁ / ‖u‖₂)²
//! ```
//!
//! λ is the fraction of `u`'s energy lost by the best scalar-scaled sign
//! approximation `α·sign(u)`: it is 0 exactly when all entries share one
//! magnitude (a scaled hypercube vertex, binarization-friendly) and reaches
//! its maximum `1 − 1/r` on one-hot vectors (a spike, binarization-hostile).

use ndarray::{ArrayView1, ArrayView2};

use crate::{Error, Result, WeightMatrix};

/// Row-wise distortion summary of a factor matrix.
#[derive(Debug, Clone)]
pub struct DistortionProfile {
    /// λ of each row, in row order.
    pub per_row_lambda: Vec<f64>,
    pub mean_lambda: f64,
    pub max_lambda: f64,
    /// First row index attaining `max_lambda`.
    pub argmax_row: usize,
    /// Rows that were identically zero; their λ is reported as 1.
    pub degenerate_rows: Vec<usize>,
}

fn norms(u: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    let mut l1 = 0.0f64;
    let mut l2sq = 0.0f64;
    for &x in u {
        if !x.is_finite() {
            return Err(Error::NonFinite("vector entry".into()));
        }
        l1 += x.abs();
        l2sq += x * x;
    }
    Ok((l1, l2sq))
}

/// Energy fraction lost by the best scalar-scaled sign approximation:
/// `λ = 1 − (1/r)(‖u‖₁/‖u‖₂)²`, clamped into `[0, 1]` against rounding.
pub fn local_distortion(u: ArrayView1<'_, f64>) -> Result<f64> {
    let r = u.len();
    let (l1, l2sq) = norms(u)?;
    if r == 0 || l2sq == 0.0 {
        return Err(Error::Degenerate("zero vector has no distortion".into()));
    }
    Ok((1.0 - l1 * l1 / (r as f64 * l2sq)).clamp(0.0, 1.0))
}

/// The scalar minimizing `‖u − α·sign(u)‖₂²`, namely `α* = ‖u‖₁ / r`.
pub fn optimal_alpha(u: ArrayView1<'_, f64>) -> Result<f64> {
    let r = u.len();
    let (l1, l2sq) = norms(u)?;
    if r == 0 || l2sq == 0.0 {
        return Err(Error::Degenerate("zero vector has no scale".into()));
    }
    Ok(l1 / r as f64)
}

/// Coordinate coherence `μ = √d · max_{i,j} |U_ij|` with `d` the row count.
///
/// For a matrix with orthonormal-ish columns, μ ranges from 1 (perfectly
/// flat, every entry ±1/√d) to √d (a spike aligned with a coordinate axis).
pub fn coherence(u: ArrayView2<'_, f64>) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::Degenerate("empty matrix has no coherence".into()));
    }
    let mut peak = 0.0f64;
    for &x in u {
        if !x.is_finite() {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        peak = peak.max(x.abs());
    }
    Ok((u.nrows() as f64).sqrt() * peak)
}

/// Compound distortion of a factor pair: `Λ = 1 − (1−λ_u)(1−λ_v)`.
pub fn global_distortion(lambda_u: f64, lambda_v: f64) -> Result<f64> {
    for l in [lambda_u, lambda_v] {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::OutOfRange(format!("lambda {l} outside [0,1]")));
        }
    }
    Ok(1.0 - (1.0 - lambda_u) * (1.0 - lambda_v))
}

/// Row-wise [`local_distortion`] with summary statistics. Zero rows do not
/// abort the sweep; they are reported as λ = 1 and flagged.
pub fn distortion_profile(factor: ArrayView2<'_, f64>) -> Result<DistortionProfile> {
    if factor.nrows() == 0 || factor.ncols() == 0 {
        return Err(Error::Degenerate("empty factor has no profile".into()));
    }
    let mut per_row = Vec::with_capacity(factor.nrows());
    let mut degenerate = Vec::new();
    for (i, row) in factor.rows().into_iter().enumerate() {
        let (l1, l2sq) = norms(row)?;
        if l2sq == 0.0 {
            degenerate.push(i);
            per_row.push(1.0);
        } else {
            per_row.push((1.0 - l1 * l1 / (row.len() as f64 * l2sq)).clamp(0.0, 1.0));
        }
    }
    let mean = per_row.iter().sum::<f64>() / per_row.len() as f64;
    let (mut argmax, mut max) = (0usize, f64::NEG_INFINITY);
    for (i, &l) in per_row.iter().enumerate() {
        if l > max {
            max = l;
            argmax = i;
        }
    }
    Ok(DistortionProfile {
        per_row_lambda: per_row,
        mean_lambda: mean,
        max_lambda: max,
        argmax_row: argmax,
        degenerate_rows: degenerate,
    })
}

/// Mean squared entrywise difference.
pub fn mse(a: &WeightMatrix, b: &WeightMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mse over {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.len() as f64;
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum / n)
}
