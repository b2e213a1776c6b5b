//! Latent factor construction and rotation.
//!
//! A weight matrix is first split into a rank-r pair `Û = U_r·Σ_r^{1/2}`,
//! `V̂ = V_r·Σ_r^{1/2}` (so `W ≈ ÛV̂ᵀ`). Because `(ÛR)(V̂R)ᵀ = ÛV̂ᵀ` for any
//! orthogonal `R`, the pair can be rotated freely in latent space; rotations
//! are chosen to push factor rows toward scaled hypercube vertices, where
//! sign binarization is lossless. Two choices are provided: a seeded random
//! rotation and the alternating projection/Procrustes refinement
//! ([`joint_itq_trace`]) that starts from it. Finally [`dual_svid`] extracts
//! the three diagonal scale vectors of the
//! `diag(h) · U_b · diag(l) · V_bᵀ · diag(g)` form from rank-1 models of the
//! factor magnitudes.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use crate::linalg::{gaussian, matmul, matmul_nt, matmul_tn, qr_thin_q, seeded_rng, thin_svd};
use crate::metrics::distortion_profile;
use crate::{Error, Result, WeightMatrix};

/// Default number of alternating-optimization rounds in [`joint_itq`].
pub const DEFAULT_ITQ_ITERATIONS: usize = 50;

/// Scale entries are clamped to this floor instead of reaching zero, so the
/// diagonal scale matrices stay invertible.
pub const SCALE_FLOOR: f64 = 1e-12;

/// A rank-r latent factor pair: `u_factor` is d_out × r, `v_factor` is
/// d_in × r, and `W ≈ u_factor · v_factorᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    u_factor: Array2<f64>,
    v_factor: Array2<f64>,
    rank_r: usize,
}

impl LatentFactors {
    pub fn new(u_factor: Array2<f64>, v_factor: Array2<f64>) -> Result<Self> {
        let rank_r = u_factor.ncols();
        if rank_r == 0 || v_factor.ncols() != rank_r {
            return Err(Error::DimensionMismatch(format!(
                "factor ranks disagree: {} vs {}",
                rank_r,
                v_factor.ncols()
            )));
        }
        if u_factor.nrows() == 0 || v_factor.nrows() == 0 {
            return Err(Error::DimensionMismatch("factors must have rows".into()));
        }
        for m in [&u_factor, &v_factor] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("factor entry".into()));
            }
        }
        Ok(Self { u_factor, v_factor, rank_r })
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u_factor
    }

    pub fn v(&self) -> &Array2<f64> {
        &self.v_factor
    }

    pub fn rank(&self) -> usize {
        self.rank_r
    }

    pub fn d_out(&self) -> usize {
        self.u_factor.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.v_factor.nrows()
    }

    /// `u_factor · v_factorᵀ`, the dense matrix the pair models.
    pub fn product(&self) -> WeightMatrix {
        matmul_nt(self.u_factor.view(), self.v_factor.view())
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.u_factor, self.v_factor)
    }
}

/// An r × r orthogonal matrix, validated to ‖RᵀR − I‖_F < 1e−8.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMatrix {
    entries: Array2<f64>,
}

impl RotationMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let r = entries.nrows();
        if r == 0 || entries.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "rotation must be square and nonempty, got {:?}",
                entries.dim()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("rotation entry".into()));
        }
        let gram = matmul_tn(entries.view(), entries.view());
        let mut dev = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                let d = gram[(i, j)] - want;
                dev += d * d;
            }
        }
        if dev.sqrt() >= 1e-8 {
            return Err(Error::Degenerate(format!(
                "matrix is not orthogonal: |R'R - I|_F = {:.3e}",
                dev.sqrt()
            )));
        }
        Ok(Self { entries })
    }

    pub fn identity(rank_r: usize) -> Result<Self> {
        if rank_r == 0 {
            return Err(Error::RankOutOfRange("rotation rank must be >= 1".into()));
        }
        Ok(Self { entries: Array2::eye(rank_r) })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.entries
    }

    fn is_identity(&self) -> bool {
        self.entries
            .indexed_iter()
            .all(|((i, j), &x)| x == if i == j { 1.0 } else { 0.0 })
    }
}

/// The three diagonal scale vectors of the Scale-Binary-Scale-Binary-Scale
/// form: `h` per output row, `l` per latent coordinate, `g` per input column.
#[derive(Debug, Clone, PartialEq)]
pub struct TriScale {
    h_scale: Array1<f64>,
    l_scale: Array1<f64>,
    g_scale: Array1<f64>,
    floored: usize,
}

impl TriScale {
    pub fn new(h_scale: Array1<f64>, l_scale: Array1<f64>, g_scale: Array1<f64>) -> Result<Self> {
        for (name, v) in [("h", &h_scale), ("l", &l_scale), ("g", &g_scale)] {
            if v.is_empty() {
                return Err(Error::DimensionMismatch(format!("{name} scale is empty")));
            }
            if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::Degenerate(format!(
                    "{name} scale has a non-positive or non-finite entry"
                )));
            }
        }
        Ok(Self { h_scale, l_scale, g_scale, floored: 0 })
    }

    pub fn h(&self) -> &Array1<f64> {
        &self.h_scale
    }

    pub fn l(&self) -> &Array1<f64> {
        &self.l_scale
    }

    pub fn g(&self) -> &Array1<f64> {
        &self.g_scale
    }

    /// How many entries were clamped to [`SCALE_FLOOR`] during extraction
    /// because of zero rows or columns in the factor magnitudes. Nonzero
    /// counts deserve a warning upstream; the affected coordinates carry no
    /// signal.
    pub fn floored_entries(&self) -> usize {
        self.floored
    }

    /// Every scale entry rounded through IEEE half precision and back,
    /// re-floored at [`SCALE_FLOOR`] so values below half's subnormal range
    /// stay positive, and saturated at half's max so they stay finite.
    /// Models storing the scales in 16 bits.
    pub fn to_half_precision(&self) -> TriScale {
        let through = |v: &Array1<f64>| {
            v.mapv(|x| {
                let y = f64::from(half::f16::from_f64(x));
                if y.is_finite() {
                    y.max(SCALE_FLOOR)
                } else {
                    f64::from(half::f16::MAX)
                }
            })
        };
        TriScale {
            h_scale: through(&self.h_scale),
            l_scale: through(&self.l_scale),
            g_scale: through(&self.g_scale),
            floored: self.floored,
        }
    }
}

/// Rank-r factor pair from the SVD: `Û = U_r·Σ_r^{1/2}`, `V̂ = V_r·Σ_r^{1/2}`.
/// The reconstruction error `‖W − ÛV̂ᵀ‖_F²` equals the truncated tail energy
/// `Σ_{k>r} σ_k²`.
pub fn truncated_factorize(w: &WeightMatrix, rank_r: usize) -> Result<LatentFactors> {
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("weight entry".into()));
    }
    let max_rank = w.nrows().min(w.ncols());
    if rank_r == 0 || rank_r > max_rank {
        return Err(Error::RankOutOfRange(format!(
            "rank {rank_r} outside 1..={max_rank}"
        )));
    }
    let (u, sigma, v) = thin_svd(w.view())?;
    factors_from_svd(&u, sigma.as_slice().unwrap(), &v, rank_r)
}

/// Slices a precomputed SVD into a rank-r factor pair. Shared by
/// [`truncated_factorize`] and the sweep driver so both produce identical
/// factors from one decomposition.
pub(crate) fn factors_from_svd(
    u: &Array2<f64>,
    sigma: &[f64],
    v: &Array2<f64>,
    rank_r: usize,
) -> Result<LatentFactors> {
    let mut uf = u.slice(s![.., ..rank_r]).to_owned();
    let mut vf = v.slice(s![.., ..rank_r]).to_owned();
    for (k, &sig) in sigma.iter().enumerate().take(rank_r) {
        let w = sig.max(0.0).sqrt();
        uf.column_mut(k).mapv_inplace(|x| x * w);
        vf.column_mut(k).mapv_inplace(|x| x * w);
    }
    LatentFactors::new(uf, vf)
}

/// Seeded Haar-like random orthogonal matrix: thin-QR of a Gaussian draw,
/// columns sign-fixed so each column's first nonzero entry is positive.
pub fn random_orthogonal(rank_r: usize, seed: u64) -> Result<RotationMatrix> {
    if rank_r == 0 {
        return Err(Error::RankOutOfRange("rotation rank must be >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut q = qr_thin_q(gaussian(rank_r, rank_r, &mut rng).view());
    for k in 0..rank_r {
        let lead = q.column(k).iter().copied().find(|&x| x != 0.0).unwrap_or(1.0);
        if lead < 0.0 {
            q.column_mut(k).mapv_inplace(|x| -x);
        }
    }
    RotationMatrix::new(q)
}

/// Rotates both factors by the same orthogonal matrix: `Ũ = ÛR`, `Ṽ = V̂R`.
/// The modeled product is unchanged: `ŨṼᵀ = Û(RRᵀ)V̂ᵀ = ÛV̂ᵀ`.
pub fn rotate_factors(factors: &LatentFactors, rotation: &RotationMatrix) -> Result<LatentFactors> {
    if rotation.dim() != factors.rank() {
        return Err(Error::DimensionMismatch(format!(
            "rotation is {}x{} but factors have rank {}",
            rotation.dim(),
            rotation.dim(),
            factors.rank()
        )));
    }
    if rotation.is_identity() {
        return Ok(factors.clone());
    }
    LatentFactors::new(
        matmul(factors.u().view(), rotation.matrix().view()),
        matmul(factors.v().view(), rotation.matrix().view()),
    )
}

/// Per-iteration record of the alternating rotation refinement.
#[derive(Debug, Clone)]
pub struct ItqTrace {
    /// Final rotation `R_T`.
    pub rotation: RotationMatrix,
    /// `‖Z·R_t‖₁` for t = 0..=T; non-decreasing.
    pub l1_objective: Vec<f64>,
    /// Mean row distortion of `Z·R_t`.
    pub mean_lambda: Vec<f64>,
    /// Max row distortion of `Z·R_t`.
    pub max_lambda: Vec<f64>,
    /// Cumulative wall-clock milliseconds from the start of the refinement
    /// to the moment state `t` was recorded.
    pub wall_ms: Vec<f64>,
}

/// Joint rotation refinement over the stacked factor matrix `Z = [Û; V̂]`
/// ((d_out + d_in) × r), starting from the seeded random rotation.
///
/// Each round projects to the nearest binary vertices, `B ← sign(ZR)` with
/// sign(0) = +1, then solves the orthogonal Procrustes problem
/// `max_R trace(BᵀZR)` in closed form via the SVD `BᵀZ = Φ·Ω·Ψᵀ`, giving
/// `R ← Ψ·Φᵀ`. The objective `‖ZR‖₁` never decreases.
///
/// `early_stop` ends the loop once `‖R_t − R_{t−1}‖_F < 1e−6`; leave it off
/// for fixed-length, reproducible traces.
pub fn joint_itq_trace(
    factors: &LatentFactors,
    iterations: usize,
    seed: u64,
    early_stop: bool,
) -> Result<ItqTrace> {
    let init = random_orthogonal(factors.rank(), seed)?;
    joint_itq_trace_from(factors, iterations, &init, early_stop)
}

/// [`joint_itq_trace`] with a caller-supplied starting rotation.
pub fn joint_itq_trace_from(
    factors: &LatentFactors,
    iterations: usize,
    init: &RotationMatrix,
    early_stop: bool,
) -> Result<ItqTrace> {
    if init.dim() != factors.rank() {
        return Err(Error::DimensionMismatch(format!(
            "initial rotation is {}x{} but factors have rank {}",
            init.dim(),
            init.dim(),
            factors.rank()
        )));
    }
    let clock = std::time::Instant::now();
    let z = concatenate(Axis(0), &[factors.u().view(), factors.v().view()])
        .expect("factor ranks validated equal");
    let z_frob = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let slack = 1e-9 * z_frob;

    let mut rot = init.matrix().clone();
    let mut zr = matmul(z.view(), rot.view());
    let mut l1 = Vec::with_capacity(iterations + 1);
    let mut mean_lambda = Vec::with_capacity(iterations + 1);
    let mut max_lambda = Vec::with_capacity(iterations + 1);
    let mut wall_ms = Vec::with_capacity(iterations + 1);
    let record = |zr: &Array2<f64>,
                  l1: &mut Vec<f64>,
                  mean: &mut Vec<f64>,
                  max: &mut Vec<f64>,
                  wall: &mut Vec<f64>|
     -> Result<()> {
        l1.push(zr.iter().map(|x| x.abs()).sum());
        let prof = distortion_profile(zr.view())?;
        mean.push(prof.mean_lambda);
        max.push(prof.max_lambda);
        wall.push(clock.elapsed().as_secs_f64() * 1e3);
        Ok(())
    };
    record(&zr, &mut l1, &mut mean_lambda, &mut max_lambda, &mut wall_ms)?;

    for _ in 0..iterations {
        let b = zr.mapv(|x| if x >= 0.0 { 1.0 } else { -1.0 });
        let m = matmul_tn(b.view(), z.view());
        let (phi, _, psi) = thin_svd(m.view())?;
        let next = matmul_nt(psi.view(), phi.view());
        #[cfg(debug_assertions)]
        {
            let gram = matmul_tn(next.view(), next.view());
            let dev: f64 = gram
                .indexed_iter()
                .map(|((i, j), &x)| {
                    let want = if i == j { 1.0 } else { 0.0 };
                    (x - want) * (x - want)
                })
                .sum();
            debug_assert!(dev.sqrt() < 1e-6, "Procrustes output drifted from orthogonality");
        }
        let step: f64 = next
            .iter()
            .zip(rot.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        rot = next;
        zr = matmul(z.view(), rot.view());
        record(&zr, &mut l1, &mut mean_lambda, &mut max_lambda, &mut wall_ms)?;
        let n = l1.len();
        debug_assert!(
            l1[n - 1] >= l1[n - 2] - slack,
            "alignment objective decreased: {} -> {}",
            l1[n - 2],
            l1[n - 1]
        );
        if early_stop && step < 1e-6 {
            break;
        }
    }
    Ok(ItqTrace {
        rotation: RotationMatrix::new(rot)?,
        l1_objective: l1,
        mean_lambda,
        max_lambda,
        wall_ms,
    })
}

/// Final rotation of [`joint_itq_trace`] without the per-iteration record.
pub fn joint_itq(factors: &LatentFactors, iterations: usize, seed: u64) -> Result<RotationMatrix> {
    Ok(joint_itq_trace(factors, iterations, seed, false)?.rotation)
}

fn leading_scales(magnitude: &Array2<f64>) -> Result<(Array1<f64>, Array1<f64>, usize)> {
    if magnitude.is_empty() {
        return Err(Error::DimensionMismatch("magnitude matrix is empty".into()));
    }
    let mut any_positive = false;
    for &x in magnitude {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::OutOfRange(format!(
                "magnitude entries must be finite and >= 0, got {x}"
            )));
        }
        any_positive |= x > 0.0;
    }
    if !any_positive {
        return Err(Error::Degenerate("all-zero magnitude matrix".into()));
    }
    let (u, sigma, v) = thin_svd(magnitude.view())?;
    let root = sigma[0].max(0.0).sqrt();
    // The leading singular pair of a nonnegative matrix can be taken
    // entrywise nonnegative; flip the pair if the backend chose the
    // opposite orientation, then clamp rounding-level negatives.
    let flip = if u.column(0).sum() + v.column(0).sum() < 0.0 { -1.0 } else { 1.0 };
    let mut floored = 0usize;
    let mut clamp = |x: f64| -> f64 {
        let y = flip * x * root;
        if y < SCALE_FLOOR {
            floored += 1;
            SCALE_FLOOR
        } else {
            y
        }
    };
    let row: Array1<f64> = u.column(0).iter().map(|&x| clamp(x)).collect();
    let col: Array1<f64> = v.column(0).iter().map(|&x| clamp(x)).collect();
    Ok((row, col, floored))
}

/// Best rank-1 split of a nonnegative matrix: returns `(u₁·√σ₁, √σ₁·v₁)`
/// from the leading singular triplet, oriented entrywise positive. Entries
/// that would be zero (from zero rows or columns) are clamped to
/// [`SCALE_FLOOR`].
pub fn rank_one_scales(magnitude: &Array2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    let (row, col, _) = leading_scales(magnitude)?;
    Ok((row, col))
}

/// Extracts the tri-scale from rank-1 models of the factor magnitudes:
/// `h = row(|Ũ|)`, `g = row(|Ṽ|)`, `l = col(|Ũ|) ⊙ col(|Ṽ|)`.
///
/// Check [`TriScale::floored_entries`] afterwards: a nonzero count means
/// some factor row or column was identically zero and its scale was clamped.
pub fn dual_svid(factors: &LatentFactors) -> Result<TriScale> {
    let (h, l_u, f_u) = leading_scales(&factors.u().mapv(f64::abs))?;
    let (g, l_v, f_v) = leading_scales(&factors.v().mapv(f64::abs))?;
    let l = &l_u * &l_v;
    let mut scales = TriScale::new(h, l, g)?;
    scales.floored = f_u + f_v;
    Ok(scales)
}
