//! Binarization, the packed scaled-binary layer, and the end-to-end
//! compression pipeline.
//!
//! A compressed layer models a weight matrix as one or two paths of the form
//! `diag(h) · U_b · diag(l) · V_bᵀ · diag(g)` with `U_b`, `V_b` sign matrices
//! stored bit-packed. The second path, when present, is fit to the error of
//! the fully quantized first path, so the pair reconstructs as
//! `W ≈ Ŵ₁ + Ŵ₂` at the same total bit budget a single path of twice the
//! rank would use.

use ndarray::{Array2, ArrayView2};

use crate::budget::{littlebit_path_bits, littlebit_rank_for_paths, LayerDims};
use crate::factorize::{
    dual_svid, joint_itq, random_orthogonal, rotate_factors, truncated_factorize, LatentFactors,
    RotationMatrix, TriScale,
};
use crate::linalg::splitmix64;
use crate::metrics::distortion_profile;
use crate::{Error, Result, WeightMatrix};

/// Sign matrix packed 64 entries per word: bit 1 is +1, bit 0 is −1.
///
/// Rows are padded to a word boundary, so entry (i, j) lives at bit `j % 64`
/// of word `i·ceil(cols/64) + j/64`. Padding bits are always zero, which
/// makes the word array a deterministic function of the signs alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBinaryFactor {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl PackedBinaryFactor {
    /// Rebuilds a factor from raw words (deserialization path); rejects
    /// wrong word counts and nonzero padding bits.
    pub fn from_words(rows: usize, cols: usize, words: Vec<u64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(
                "packed factor must be nonempty".into(),
            ));
        }
        let wpr = cols.div_ceil(64);
        if words.len() != rows * wpr {
            return Err(Error::DimensionMismatch(format!(
                "expected {} words for {rows}x{cols}, got {}",
                rows * wpr,
                words.len()
            )));
        }
        let tail = cols % 64;
        if tail != 0 {
            let mask = !0u64 << tail;
            for row in 0..rows {
                if words[row * wpr + wpr - 1] & mask != 0 {
                    return Err(Error::Parse(format!(
                        "nonzero padding bits in packed row {row}"
                    )));
                }
            }
        }
        Ok(Self { rows, cols, words })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Words per row, `ceil(cols / 64)`.
    pub fn words_per_row(&self) -> usize {
        self.cols.div_ceil(64)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// True means +1.
    pub fn get(&self, row: usize, col: usize) -> bool {
        let wpr = self.words_per_row();
        (self.words[row * wpr + (col >> 6)] >> (col & 63)) & 1 == 1
    }

    /// Dense ±1.0 matrix.
    pub fn unpack(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| {
            if self.get(i, j) {
                1.0
            } else {
                -1.0
            }
        })
    }
}

/// Packs `sign(factor)` with the convention sign(0) = +1: bit(i,j) = 1 iff
/// `factor[(i, j)] ≥ 0` (this includes −0.0). Unpacking recovers the sign
/// pattern exactly.
pub fn binarize(factor: ArrayView2<'_, f64>) -> PackedBinaryFactor {
    let (rows, cols) = factor.dim();
    let wpr = cols.div_ceil(64);
    let mut words = vec![0u64; rows * wpr];
    for (i, row) in factor.rows().into_iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x >= 0.0 {
                words[i * wpr + (j >> 6)] |= 1u64 << (j & 63);
            }
        }
    }
    PackedBinaryFactor { rows, cols, words }
}

/// One scaled-binary term `diag(h) · U_b · diag(l) · V_bᵀ · diag(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPath {
    u_binary: PackedBinaryFactor,
    v_binary: PackedBinaryFactor,
    scales: TriScale,
}

impl QuantizedPath {
    pub fn new(
        u_binary: PackedBinaryFactor,
        v_binary: PackedBinaryFactor,
        scales: TriScale,
    ) -> Result<Self> {
        if u_binary.cols() != v_binary.cols() {
            return Err(Error::DimensionMismatch(format!(
                "binary factor ranks disagree: {} vs {}",
                u_binary.cols(),
                v_binary.cols()
            )));
        }
        if scales.h().len() != u_binary.rows()
            || scales.l().len() != u_binary.cols()
            || scales.g().len() != v_binary.rows()
        {
            return Err(Error::DimensionMismatch(format!(
                "scales ({}, {}, {}) do not match binary factors {}x{} / {}x{}",
                scales.h().len(),
                scales.l().len(),
                scales.g().len(),
                u_binary.rows(),
                u_binary.cols(),
                v_binary.rows(),
                v_binary.cols()
            )));
        }
        Ok(Self { u_binary, v_binary, scales })
    }

    pub fn u_binary(&self) -> &PackedBinaryFactor {
        &self.u_binary
    }

    pub fn v_binary(&self) -> &PackedBinaryFactor {
        &self.v_binary
    }

    pub fn scales(&self) -> &TriScale {
        &self.scales
    }

    pub fn d_out(&self) -> usize {
        self.u_binary.rows()
    }

    pub fn d_in(&self) -> usize {
        self.v_binary.rows()
    }

    pub fn rank(&self) -> usize {
        self.u_binary.cols()
    }
}

/// How the latent factors were rotated before binarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// No rotation; binarize the factors as the decomposition produced them.
    Standard,
    /// One seeded random orthogonal rotation.
    RandomRotation,
    /// Alternating projection/Procrustes refinement from the seeded start.
    JointItq,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::RandomRotation => "rotate",
            Method::JointItq => "itq",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Method::Standard),
            "rotate" => Ok(Method::RandomRotation),
            "itq" => Ok(Method::JointItq),
            other => Err(Error::Parse(format!(
                "unknown method '{other}' (expected standard|rotate|itq)"
            ))),
        }
    }
}

/// Reproducibility record of a compression run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub iterations: u32,
}

/// A compressed layer: one or two [`QuantizedPath`]s over the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    d_out: usize,
    d_in: usize,
    rank_r: usize,
    paths: Vec<QuantizedPath>,
    method_tag: Method,
    provenance: Provenance,
}

impl CompressedLayer {
    pub fn new(paths: Vec<QuantizedPath>, method_tag: Method, provenance: Provenance) -> Result<Self> {
        if paths.is_empty() || paths.len() > 2 {
            return Err(Error::DimensionMismatch(format!(
                "layer must hold 1 or 2 paths, got {}",
                paths.len()
            )));
        }
        let (d_out, d_in, rank_r) = (paths[0].d_out(), paths[0].d_in(), paths[0].rank());
        for p in &paths[1..] {
            if p.d_out() != d_out || p.d_in() != d_in || p.rank() != rank_r {
                return Err(Error::DimensionMismatch(
                    "paths disagree on shape or rank".into(),
                ));
            }
        }
        Ok(Self { d_out, d_in, rank_r, paths, method_tag, provenance })
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn rank(&self) -> usize {
        self.rank_r
    }

    pub fn paths(&self) -> &[QuantizedPath] {
        &self.paths
    }

    pub fn method(&self) -> Method {
        self.method_tag
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// Evaluates `diag(h) · U_b · diag(l) · V_bᵀ · diag(g)` with the binary
/// entries as exact ±1: entry (i, j) is `h_i · (Σ_k u_ik·l_k·v_jk) · g_j`
/// with the sum taken in ascending k. The result is bit-identical to the
/// dense float evaluation in that order.
pub fn reconstruct_path(path: &QuantizedPath) -> WeightMatrix {
    let d_out = path.d_out();
    let d_in = path.d_in();
    let r = path.rank();
    let h = path.scales().h();
    let l = path.scales().l();
    let g = path.scales().g();
    let u_wpr = path.u_binary().words_per_row();
    let u_words = path.u_binary().words();
    let sv = path.v_binary().unpack();
    let sv_flat = sv.as_slice().expect("unpack is standard layout");

    let mut out = Array2::<f64>::zeros((d_out, d_in));
    let out_flat = out.as_slice_mut().expect("zeros is standard layout");
    let mut scaled_row = vec![0.0f64; r];
    for i in 0..d_out {
        let urow = &u_words[i * u_wpr..(i + 1) * u_wpr];
        for (k, a) in scaled_row.iter_mut().enumerate() {
            let positive = (urow[k >> 6] >> (k & 63)) & 1 == 1;
            *a = if positive { l[k] } else { -l[k] };
        }
        let hi = h[i];
        let out_row = &mut out_flat[i * d_in..(i + 1) * d_in];
        for (j, out_ij) in out_row.iter_mut().enumerate() {
            let svr = &sv_flat[j * r..(j + 1) * r];
            let mut acc = 0.0f64;
            for k in 0..r {
                acc += scaled_row[k] * svr[k];
            }
            *out_ij = hi * acc * g[j];
        }
    }
    out
}

/// Sum of [`reconstruct_path`] over the layer's paths.
pub fn decompress(layer: &CompressedLayer) -> WeightMatrix {
    let mut out = reconstruct_path(&layer.paths()[0]);
    for p in &layer.paths()[1..] {
        out += &reconstruct_path(p);
    }
    out
}

/// Row-distortion summary of one path's factors, measured after rotation at
/// the moment of binarization.
#[derive(Debug, Clone, Copy)]
pub struct PathStats {
    pub u_mean_lambda: f64,
    pub u_max_lambda: f64,
    pub v_mean_lambda: f64,
    pub v_max_lambda: f64,
}

/// Side measurements of a compression run, one entry per stored path.
#[derive(Debug, Clone)]
pub struct CompressionStats {
    pub paths: Vec<PathStats>,
}

/// Knobs of [`compress_layer_with`]; [`compress_layer`] fills the defaults.
#[derive(Debug, Clone)]
pub struct CompressOptions {
    /// Total bit budget as bits per original parameter.
    pub budget_bpp: f64,
    pub method: Method,
    /// Add a second path fit to the quantized first path's error.
    pub residual: bool,
    pub seed: u64,
    /// Refinement rounds; only read when `method` is [`Method::JointItq`].
    pub iterations: usize,
    /// Reuse path 1's rotation on the residual path instead of running an
    /// independent seeded optimization on it.
    pub reuse_rotation: bool,
}

fn fit_rotation(
    factors: &LatentFactors,
    method: Method,
    seed: u64,
    iterations: usize,
) -> Result<Option<RotationMatrix>> {
    match method {
        Method::Standard => Ok(None),
        Method::RandomRotation => Ok(Some(random_orthogonal(factors.rank(), seed)?)),
        Method::JointItq => Ok(Some(joint_itq(factors, iterations, seed)?)),
    }
}

/// One pipeline pass over already-built factors: rotate, extract scales,
/// binarize. Shared with the sweep driver so a sweep cell that slices a
/// precomputed decomposition produces bit-identical paths to
/// [`compress_layer`].
pub(crate) fn quantize_from_factors(
    factors: LatentFactors,
    rotation_source: RotationSource<'_>,
    iterations: usize,
) -> Result<(QuantizedPath, Option<RotationMatrix>, PathStats)> {
    let rotation = match rotation_source {
        RotationSource::Fit(method, seed) => fit_rotation(&factors, method, seed, iterations)?,
        RotationSource::Reuse(r) => r.cloned(),
    };
    let rotated = match &rotation {
        Some(r) => rotate_factors(&factors, r)?,
        None => factors,
    };
    let u_prof = distortion_profile(rotated.u().view())?;
    let v_prof = distortion_profile(rotated.v().view())?;
    let stats = PathStats {
        u_mean_lambda: u_prof.mean_lambda,
        u_max_lambda: u_prof.max_lambda,
        v_mean_lambda: v_prof.mean_lambda,
        v_max_lambda: v_prof.max_lambda,
    };
    let scales = dual_svid(&rotated)?;
    let path = QuantizedPath::new(
        binarize(rotated.u().view()),
        binarize(rotated.v().view()),
        scales,
    )?;
    Ok((path, rotation, stats))
}

pub(crate) fn quantize_one(
    target: &WeightMatrix,
    rank: usize,
    rotation_source: RotationSource<'_>,
    iterations: usize,
) -> Result<(QuantizedPath, Option<RotationMatrix>, PathStats)> {
    let factors = truncated_factorize(target, rank)?;
    quantize_from_factors(factors, rotation_source, iterations)
}

pub(crate) enum RotationSource<'a> {
    Fit(Method, u64),
    Reuse(Option<&'a RotationMatrix>),
}

/// Full pipeline at a bit budget: pick the largest affordable rank, then for
/// each path factorize, rotate per `method`, extract tri-scales, binarize.
/// With `residual` on, the budget is split over two paths of equal rank and
/// path 2 is fit to `W − Ŵ₁`, the error of the quantized first path.
///
/// Path 2 runs its own seeded rotation fit (derived deterministically from
/// `seed`) unless `reuse_rotation` is set.
///
/// Returns the layer together with the per-path distortion measurements
/// taken along the way; [`compress_layer_with`] discards the latter.
pub fn compress_layer_traced(
    w: &WeightMatrix,
    opts: &CompressOptions,
) -> Result<(CompressedLayer, CompressionStats)> {
    let dims = LayerDims::new(w.nrows(), w.ncols())?;
    let path_count = if opts.residual { 2 } else { 1 };
    let rank = littlebit_rank_for_paths(dims, opts.budget_bpp, path_count)?;
    if rank == 0 {
        return Err(Error::BudgetTooSmall(format!(
            "budget {} bpp cannot afford rank 1 at {}x{} with {} path(s)",
            opts.budget_bpp,
            dims.d_out(),
            dims.d_in(),
            path_count
        )));
    }
    let max_rank = dims.d_out().min(dims.d_in());
    if rank > max_rank {
        return Err(Error::RankOutOfRange(format!(
            "budget {} bpp affords rank {rank}, beyond the factorizable maximum \
             {max_rank} for {}x{}; the format cannot spend that much",
            opts.budget_bpp,
            dims.d_out(),
            dims.d_in()
        )));
    }
    debug_assert!(
        littlebit_path_bits(dims, rank, path_count).total_bits() as f64
            <= opts.budget_bpp * dims.n_params() as f64
    );

    let (first, rotation, first_stats) = quantize_one(
        w,
        rank,
        RotationSource::Fit(opts.method, opts.seed),
        opts.iterations,
    )?;
    let mut paths = vec![first];
    let mut stats = CompressionStats { paths: vec![first_stats] };
    if opts.residual {
        let error = w - &reconstruct_path(&paths[0]);
        let source = if opts.reuse_rotation {
            RotationSource::Reuse(rotation.as_ref())
        } else {
            RotationSource::Fit(opts.method, splitmix64(opts.seed))
        };
        let (second, _, second_stats) = quantize_one(&error, rank, source, opts.iterations)?;
        paths.push(second);
        stats.paths.push(second_stats);
    }
    let layer = CompressedLayer::new(
        paths,
        opts.method,
        Provenance {
            seed: opts.seed,
            iterations: opts.iterations as u32,
        },
    )?;
    Ok((layer, stats))
}

/// [`compress_layer_traced`] without the measurements.
pub fn compress_layer_with(w: &WeightMatrix, opts: &CompressOptions) -> Result<CompressedLayer> {
    Ok(compress_layer_traced(w, opts)?.0)
}

/// [`compress_layer_with`] with `reuse_rotation` off.
pub fn compress_layer(
    w: &WeightMatrix,
    budget_bpp: f64,
    method: Method,
    residual: bool,
    seed: u64,
    iterations: usize,
) -> Result<CompressedLayer> {
    compress_layer_with(
        w,
        &CompressOptions {
            budget_bpp,
            method,
            residual,
            seed,
            iterations,
            reuse_rotation: false,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian, seeded_rng};
    use crate::metrics::mse;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array1};

    #[test]
    fn all_positive_packs_to_ones() {
        let m = Array2::<f64>::from_elem((3, 70), 2.5);
        let p = binarize(m.view());
        assert_eq!(p.words_per_row(), 2);
        for row in 0..3 {
            assert_eq!(p.words()[row * 2], !0u64);
            assert_eq!(p.words()[row * 2 + 1], (1u64 << 6) - 1);
        }
    }

    #[test]
    fn negation_complements_payload() {
        let mut rng = seeded_rng(1);
        let mut m = gaussian(4, 77, &mut rng);
        // kill exact zeros so sign is antisymmetric
        m.mapv_inplace(|x| if x == 0.0 { 0.5 } else { x });
        let p = binarize(m.view());
        let n = binarize(m.mapv(|x| -x).view());
        let tail_mask = (1u64 << (77 % 64)) - 1;
        let wpr = p.words_per_row();
        for row in 0..4 {
            for w in 0..wpr {
                let mask = if w == wpr - 1 { tail_mask } else { !0u64 };
                assert_eq!(p.words()[row * wpr + w] & mask, !n.words()[row * wpr + w] & mask);
                assert_eq!(n.words()[row * wpr + w] & !mask, 0);
            }
        }
    }

    #[test]
    fn unpack_matches_dense_sign() {
        let mut rng = seeded_rng(2);
        for (rows, cols) in [(5, 7), (3, 64), (2, 65), (1, 130)] {
            let m = gaussian(rows, cols, &mut rng);
            let p = binarize(m.view());
            let dense = p.unpack();
            for ((i, j), &x) in m.indexed_iter() {
                let want = if x >= 0.0 { 1.0 } else { -1.0 };
                assert_eq!(dense[(i, j)], want);
                assert_eq!(p.get(i, j), x >= 0.0);
            }
            let again = binarize(dense.view());
            assert_eq!(p, again);
        }
    }

    #[test]
    fn sign_of_zero_is_positive() {
        let m = arr2(&[[0.0, -0.0, -1.0]]);
        let p = binarize(m.view());
        assert!(p.get(0, 0));
        assert!(p.get(0, 1));
        assert!(!p.get(0, 2));
    }

    #[test]
    fn from_words_validates() {
        let m = Array2::<f64>::ones((2, 65));
        let p = binarize(m.view());
        let rebuilt =
            PackedBinaryFactor::from_words(2, 65, p.words().to_vec()).unwrap();
        assert_eq!(rebuilt, p);
        assert!(PackedBinaryFactor::from_words(2, 65, vec![0; 3]).is_err());
        let mut dirty = p.words().to_vec();
        dirty[1] |= 1u64 << 10; // padding bit of row 0
        assert!(PackedBinaryFactor::from_words(2, 65, dirty).is_err());
    }

    fn path(h: &[f64], l: &[f64], g: &[f64], u: &Array2<f64>, v: &Array2<f64>) -> QuantizedPath {
        QuantizedPath::new(
            binarize(u.view()),
            binarize(v.view()),
            TriScale::new(
                Array1::from_vec(h.to_vec()),
                Array1::from_vec(l.to_vec()),
                Array1::from_vec(g.to_vec()),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn reconstruct_all_ones_rank_two() {
        let ones = Array2::<f64>::ones((2, 2));
        let p = path(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], &ones, &ones);
        let w = reconstruct_path(&p);
        for &x in &w {
            assert_abs_diff_eq!(x, 2.0);
        }
    }

    #[test]
    fn reconstruct_rank_one_golden() {
        let u = Array2::<f64>::ones((2, 1));
        let v = Array2::<f64>::ones((2, 1));
        let p = path(&[2.0, 1.0], &[3.0], &[1.0, 4.0], &u, &v);
        let w = reconstruct_path(&p);
        let want = arr2(&[[6.0, 24.0], [3.0, 12.0]]);
        assert_eq!(w, want);
    }

    #[test]
    fn reconstruct_matches_dense_oracle_exactly() {
        let mut rng = seeded_rng(3);
        for (d_out, d_in, r) in [(5, 7, 3), (9, 4, 70), (6, 6, 64)] {
            let u = gaussian(d_out, r, &mut rng);
            let v = gaussian(d_in, r, &mut rng);
            let h: Vec<f64> = (0..d_out).map(|i| 0.5 + i as f64).collect();
            let l: Vec<f64> = (0..r).map(|k| 1.0 + 0.1 * k as f64).collect();
            let g: Vec<f64> = (0..d_in).map(|j| 2.0 - 0.1 * j as f64).collect();
            let p = path(&h, &l, &g, &u, &v);
            let got = reconstruct_path(&p);
            for i in 0..d_out {
                for j in 0..d_in {
                    let mut acc = 0.0f64;
                    for k in 0..r {
                        let su = if u[(i, k)] >= 0.0 { 1.0 } else { -1.0 };
                        let sv = if v[(j, k)] >= 0.0 { 1.0 } else { -1.0 };
                        acc += su * l[k] * sv;
                    }
                    let want = h[i] * acc * g[j];
                    assert_eq!(got[(i, j)], want, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn path_dimension_validation() {
        let u = Array2::<f64>::ones((2, 3));
        let v = Array2::<f64>::ones((4, 3));
        let good = TriScale::new(
            Array1::from_vec(vec![1.0; 2]),
            Array1::from_vec(vec![1.0; 3]),
            Array1::from_vec(vec![1.0; 4]),
        )
        .unwrap();
        assert!(QuantizedPath::new(binarize(u.view()), binarize(v.view()), good.clone()).is_ok());
        let short_l = TriScale::new(
            Array1::from_vec(vec![1.0; 2]),
            Array1::from_vec(vec![1.0; 2]),
            Array1::from_vec(vec![1.0; 4]),
        )
        .unwrap();
        assert!(QuantizedPath::new(binarize(u.view()), binarize(v.view()), short_l).is_err());
        let w = Array2::<f64>::ones((4, 2));
        assert!(QuantizedPath::new(binarize(u.view()), binarize(w.view()), good).is_err());
    }

    /// Sign-structured input the model can represent exactly: scaled
    /// Hadamard sign factors with constant h, g and distinct latent scales.
    fn sign_structured_case() -> WeightMatrix {
        let had = [
            [1.0f64, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
            [1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0],
        ];
        let b = arr2(&had);
        let l = [5.0, 3.0, 2.0, 1.0];
        let mut w = Array2::<f64>::zeros((8, 8));
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = 0.0;
                for (k, &lk) in l.iter().enumerate() {
                    acc += b[(i, k)] * lk * b[(j, k)];
                }
                w[(i, j)] = 0.7 * acc * 1.3;
            }
        }
        w
    }

    #[test]
    fn compress_recovers_sign_structured_input() {
        let w = sign_structured_case();
        // 8 bpp at 8x8 single path affords exactly rank 8
        let layer = compress_layer(&w, 8.0, Method::Standard, false, 0, 0).unwrap();
        assert!(layer.rank() >= 4);
        let rec = decompress(&layer);
        let num: f64 = (&w - &rec).iter().map(|x| x * x).sum();
        let den: f64 = w.iter().map(|x| x * x).sum();
        assert!(num.sqrt() <= 1e-6 * den.sqrt(), "rel err {}", num.sqrt() / den.sqrt());
    }

    #[test]
    fn compress_budget_honesty() {
        let mut rng = seeded_rng(4);
        let w = gaussian(96, 64, &mut rng);
        for (bpp, residual) in [(2.0, false), (2.0, true), (4.0, true)] {
            let layer = compress_layer(&w, bpp, Method::Standard, residual, 9, 0).unwrap();
            let dims = LayerDims::new(96, 64).unwrap();
            let paths = layer.paths().len();
            let spent = littlebit_path_bits(dims, layer.rank(), paths).total_bits();
            let budget = (bpp * dims.n_params() as f64).floor() as u64;
            assert!(spent <= budget);
            let next = littlebit_path_bits(dims, layer.rank() + 1, paths).total_bits();
            assert!(next > budget, "rank not maximal at bpp {bpp}");
        }
    }

    #[test]
    fn compress_rejects_starved_budget() {
        let mut rng = seeded_rng(5);
        let w = gaussian(32, 32, &mut rng);
        // below the fixed scale-vector floor
        let err = compress_layer(&w, 0.05, Method::Standard, false, 0, 0);
        assert!(matches!(err, Err(Error::BudgetTooSmall(_))));
        // above the floor but not enough for rank 1
        let w2 = gaussian(64, 64, &mut rng);
        let err2 = compress_layer(&w2, 0.51, Method::Standard, false, 0, 0);
        assert!(matches!(err2, Err(Error::BudgetTooSmall(_))));
        // budget so large the affordable rank cannot be factorized
        let err3 = compress_layer(&w, 40.0, Method::Standard, false, 0, 0);
        assert!(matches!(err3, Err(Error::RankOutOfRange(_))));
    }

    #[test]
    fn decompress_single_path_is_reconstruct() {
        let mut rng = seeded_rng(6);
        let w = gaussian(40, 30, &mut rng);
        let layer = compress_layer(&w, 3.0, Method::RandomRotation, false, 11, 0).unwrap();
        assert_eq!(layer.paths().len(), 1);
        assert_eq!(decompress(&layer), reconstruct_path(&layer.paths()[0]));
    }

    #[test]
    fn degenerate_second_path_adds_scale_floor_noise_only() {
        let mut rng = seeded_rng(7);
        let w = gaussian(20, 16, &mut rng);
        let layer = compress_layer(&w, 4.0, Method::Standard, false, 3, 0).unwrap();
        let p1 = layer.paths()[0].clone();
        let r = p1.rank();
        let floor = crate::factorize::SCALE_FLOOR;
        let tiny = QuantizedPath::new(
            p1.u_binary().clone(),
            p1.v_binary().clone(),
            TriScale::new(
                Array1::from_elem(20, floor),
                Array1::from_elem(r, floor),
                Array1::from_elem(16, floor),
            )
            .unwrap(),
        )
        .unwrap();
        let two = CompressedLayer::new(
            vec![p1.clone(), tiny],
            Method::Standard,
            Provenance { seed: 3, iterations: 0 },
        )
        .unwrap();
        let diff = mse(&decompress(&two), &reconstruct_path(&p1)).unwrap();
        assert!(diff < 1e-60, "floor path leaked energy: {diff}");
    }

    #[test]
    fn residual_path_reduces_error_at_same_rank() {
        use crate::spectral::{synth_power_law, SpectrumModel};
        let model = SpectrumModel::new(0.2, 1.0, 64).unwrap();
        let w = synth_power_law(64, 64, &model, 8).unwrap();
        let layer = compress_layer(&w, 4.0, Method::JointItq, true, 21, 25).unwrap();
        assert_eq!(layer.paths().len(), 2);
        let one = mse(&reconstruct_path(&layer.paths()[0]), &w).unwrap();
        let both = mse(&decompress(&layer), &w).unwrap();
        assert!(both < one, "residual path did not help: {both} vs {one}");
    }

    #[test]
    fn reuse_rotation_changes_residual_path() {
        let mut rng = seeded_rng(8);
        let w = gaussian(48, 40, &mut rng);
        let base = CompressOptions {
            budget_bpp: 4.0,
            method: Method::RandomRotation,
            residual: true,
            seed: 5,
            iterations: 0,
            reuse_rotation: false,
        };
        let fresh = compress_layer_with(&w, &base).unwrap();
        let reused = compress_layer_with(
            &w,
            &CompressOptions {
                reuse_rotation: true,
                ..base
            },
        )
        .unwrap();
        assert_eq!(fresh.paths()[0], reused.paths()[0]);
        assert_ne!(fresh.paths()[1], reused.paths()[1]);
    }

    #[test]
    fn traced_compression_reports_per_path_distortion() {
        let mut rng = seeded_rng(10);
        let w = gaussian(64, 48, &mut rng);
        let opts = CompressOptions {
            budget_bpp: 3.0,
            method: Method::RandomRotation,
            residual: true,
            seed: 17,
            iterations: 0,
            reuse_rotation: false,
        };
        let (layer, stats) = compress_layer_traced(&w, &opts).unwrap();
        assert_eq!(stats.paths.len(), 2);
        for p in &stats.paths {
            for l in [p.u_mean_lambda, p.u_max_lambda, p.v_mean_lambda, p.v_max_lambda] {
                assert!((0.0..=1.0).contains(&l));
            }
            assert!(p.u_mean_lambda <= p.u_max_lambda);
            assert!(p.v_mean_lambda <= p.v_max_lambda);
        }
        assert_eq!(layer, compress_layer_with(&w, &opts).unwrap());
    }

    #[test]
    fn half_precision_scales_stay_positive_and_close() {
        let mut rng = seeded_rng(9);
        let w = gaussian(32, 32, &mut rng);
        let layer = compress_layer(&w, 3.0, Method::Standard, false, 1, 0).unwrap();
        let s = layer.paths()[0].scales();
        let half = s.to_half_precision();
        for (a, b) in s.h().iter().zip(half.h().iter()) {
            assert!(*b > 0.0);
            assert!((a - b).abs() <= 1e-3 * a.abs().max(f64::MIN_POSITIVE));
        }
    }
}
