//! Thin deterministic wrappers over the dense linear-algebra backend.
//!
//! Public modules speak `ndarray`; this module owns the conversions to and
//! from `faer` and pins the conventions the rest of the crate relies on:
//! singular values sorted descending, singular-vector signs fixed so the
//! largest-magnitude entry of each left vector is positive, QR orthonormal
//! bases taken column-thin.

use faer::linalg::matmul::matmul as faer_matmul;
use faer::{Accum, Mat, MatMut, MatRef};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Deterministic stream cipher RNG; identical sequences on every platform.
pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// One step of the splitmix64 sequence; used to derive independent sub-seeds.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard-Gaussian matrix filled in row-major order from `rng`.
pub(crate) fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches data length")
}

/// Standard-Gaussian vector.
pub(crate) fn gaussian_vec(len: usize, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_iter((0..len).map(|_| StandardNormal.sample(rng)))
}

fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `a · b`.
pub(crate) fn matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(a.ncols(), b.nrows());
    let (m, n) = (a.nrows(), b.ncols());
    let a_std = a.as_standard_layout();
    let b_std = b.as_standard_layout();
    let ar = MatRef::from_row_major_slice(a_std.as_slice().unwrap(), a.nrows(), a.ncols());
    let br = MatRef::from_row_major_slice(b_std.as_slice().unwrap(), b.nrows(), b.ncols());
    let mut out = vec![0.0f64; m * n];
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    faer_matmul(dst, Accum::Replace, ar, br, 1.0, faer::get_global_parallelism());
    Array2::from_shape_vec((m, n), out).expect("shape matches data length")
}

/// `a · bᵀ`.
pub(crate) fn matmul_nt(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(a.ncols(), b.ncols());
    let (m, n) = (a.nrows(), b.nrows());
    let a_std = a.as_standard_layout();
    let b_std = b.as_standard_layout();
    let ar = MatRef::from_row_major_slice(a_std.as_slice().unwrap(), a.nrows(), a.ncols());
    let br = MatRef::from_row_major_slice(b_std.as_slice().unwrap(), b.nrows(), b.ncols());
    let mut out = vec![0.0f64; m * n];
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    faer_matmul(
        dst,
        Accum::Replace,
        ar,
        br.transpose(),
        1.0,
        faer::get_global_parallelism(),
    );
    Array2::from_shape_vec((m, n), out).expect("shape matches data length")
}

/// `aᵀ · b`.
pub(crate) fn matmul_tn(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let (m, n) = (a.ncols(), b.ncols());
    let a_std = a.as_standard_layout();
    let b_std = b.as_standard_layout();
    let ar = MatRef::from_row_major_slice(a_std.as_slice().unwrap(), a.nrows(), a.ncols());
    let br = MatRef::from_row_major_slice(b_std.as_slice().unwrap(), b.nrows(), b.ncols());
    let mut out = vec![0.0f64; m * n];
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    faer_matmul(
        dst,
        Accum::Replace,
        ar.transpose(),
        br,
        1.0,
        faer::get_global_parallelism(),
    );
    Array2::from_shape_vec((m, n), out).expect("shape matches data length")
}

/// Thin SVD `a = U · diag(s) · Vᵀ` with `s` descending.
///
/// The backend decides each singular vector only up to sign; to make the
/// decomposition a function of the input, each (uₖ, vₖ) pair is flipped so
/// that the largest-magnitude entry of uₖ (first index on ties) is positive.
pub(crate) fn thin_svd(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let fa = to_faer(a);
    let svd = fa.thin_svd().map_err(|_| Error::SvdFailed)?;
    let mut u = from_faer(svd.U());
    let mut v = from_faer(svd.V());
    let k = svd.S().dim();
    let s = Array1::from_iter((0..k).map(|i| svd.S()[i]));
    for col in 0..k {
        let mut arg = 0usize;
        let mut best = -1.0f64;
        for (i, &x) in u.column(col).iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                arg = i;
            }
        }
        if u[(arg, col)] < 0.0 {
            u.column_mut(col).mapv_inplace(|x| -x);
            v.column_mut(col).mapv_inplace(|x| -x);
        }
    }
    Ok((u, s, v))
}

/// Thin orthonormal `Q` factor of the (non-pivoted) QR decomposition.
pub(crate) fn qr_thin_q(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let fa = to_faer(a);
    let q = fa.qr().compute_thin_Q();
    from_faer(q.as_ref())
}
