//! Exact bit accounting for compressed layers and baselines.
//!
//! Every footprint here is evaluated in integer arithmetic; bits-per-parameter
//! is computed last as a ratio. The layer formula
//!
//! ```text
//! bits(r) = 2r(d_in + d_out + 16) + 32(d_in + d_out)
//! ```
//!
//! covers the default two-path layout (binary factors, 16-bit latent scales,
//! 16-bit I/O scale vectors, two paths); [`littlebit_path_bits`] generalizes
//! it to any path count so single-path layers are accounted honestly too.
//! Inverting the formula for a target budget gives the maximum affordable
//! rank, which is what makes bit budgets translate directly into model size:
//! no side metadata, no index bitmaps.

use crate::{Error, Result};

/// Shape of one linear layer, `d_out × d_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    d_out: usize,
    d_in: usize,
}

impl LayerDims {
    pub fn new(d_out: usize, d_in: usize) -> Result<Self> {
        if d_out == 0 || d_in == 0 {
            return Err(Error::DimensionMismatch(format!(
                "layer dims must be positive, got {d_out}x{d_in}"
            )));
        }
        Ok(Self { d_out, d_in })
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    /// Number of weight entries `N = d_out · d_in`.
    pub fn n_params(&self) -> u64 {
        self.d_out as u64 * self.d_in as u64
    }

    /// `d_in + d_out`, the recurring scale-vector length sum.
    fn dim_sum(&self) -> u64 {
        self.d_out as u64 + self.d_in as u64
    }
}

/// An exact bit total with its per-component breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReport {
    total_bits: u64,
    bpp: f64,
    breakdown: Vec<(String, u64)>,
}

impl MemoryReport {
    fn new(breakdown: Vec<(&str, u64)>, param_count: u64) -> Self {
        let total_bits: u64 = breakdown.iter().map(|(_, b)| b).sum();
        Self {
            total_bits,
            bpp: total_bits as f64 / param_count as f64,
            breakdown: breakdown
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    fn from_owned(breakdown: Vec<(String, u64)>, param_count: u64) -> Self {
        let total_bits: u64 = breakdown.iter().map(|(_, b)| b).sum();
        Self {
            total_bits,
            bpp: total_bits as f64 / param_count as f64,
            breakdown,
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    /// Bits per parameter: `total_bits / n_params`.
    pub fn bpp(&self) -> f64 {
        self.bpp
    }

    pub fn breakdown(&self) -> &[(String, u64)] {
        &self.breakdown
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Integer bit budget bought by `budget_bpp` on this layer.
fn budget_bits(dims: LayerDims, budget_bpp: f64) -> u64 {
    (budget_bpp * dims.n_params() as f64).floor() as u64
}

/// Footprint of a scaled-binary layer with `paths` quantized paths of rank
/// `rank_r` each: per path, two binary factors (`r·(d_in+d_out)` bits), one
/// 16-bit latent scale vector (`16r`), and 16-bit I/O scale vectors
/// (`16(d_in+d_out)`).
pub fn littlebit_path_bits(dims: LayerDims, rank_r: usize, paths: usize) -> MemoryReport {
    let p = paths as u64;
    let r = rank_r as u64;
    let s = dims.dim_sum();
    MemoryReport::new(
        vec![
            ("binary factors", p * r * s),
            ("io scales", p * 16 * s),
            ("latent scales", p * 16 * r),
        ],
        dims.n_params(),
    )
}

/// Two-path layer footprint: `2r(d_in+d_out+16) + 32(d_in+d_out)` bits.
pub fn littlebit_bits(dims: LayerDims, rank_r: usize) -> MemoryReport {
    littlebit_path_bits(dims, rank_r, 2)
}

/// Maximum rank affordable under `budget_bpp` with `paths` quantized paths.
///
/// Exact integer inversion of [`littlebit_path_bits`]: the returned rank `r`
/// satisfies `bits(r) ≤ ⌊budget_bpp·N⌋ < bits(r+1)`.
pub fn littlebit_rank_for_paths(dims: LayerDims, budget_bpp: f64, paths: usize) -> Result<usize> {
    let p = paths as u64;
    let s = dims.dim_sum();
    let budget = budget_bits(dims, budget_bpp);
    let fixed = p * 16 * s;
    if budget <= fixed {
        return Err(Error::BudgetTooSmall(format!(
            "budget {budget} bits does not exceed the {fixed}-bit scale floor"
        )));
    }
    Ok(((budget - fixed) / (p * (s + 16))) as usize)
}

/// Maximum rank affordable under `budget_bpp` with the two-path formula:
/// `r = ⌊(B·N − 32(d_in+d_out)) / (2(d_in+d_out+16))⌋`.
pub fn littlebit_rank_for_budget(dims: LayerDims, budget_bpp: f64) -> Result<usize> {
    littlebit_rank_for_paths(dims, budget_bpp, 2)
}

/// Binary-with-row/column-scales baseline: `N + 16(d_in+d_out)` bits.
pub fn onebit_bits(dims: LayerDims) -> MemoryReport {
    MemoryReport::new(
        vec![
            ("binary weights", dims.n_params()),
            ("row/col scales", 16 * dims.dim_sum()),
        ],
        dims.n_params(),
    )
}

/// Grouped 2-bit quantization baseline: `2N` weight bits plus a 16-bit scale
/// and 16-bit zero-point per group of `group_size` flattened weights
/// (`2.25·N` exactly at the default `group_size = 128` when `128 | d_in`).
pub fn gptq_bits(dims: LayerDims, group_size: usize) -> MemoryReport {
    assert!(group_size >= 1, "group_size must be at least 1");
    let n = dims.n_params();
    let groups = ceil_div(n, group_size as u64);
    MemoryReport::new(
        vec![
            ("quantized weights", 2 * n),
            ("group scales/zeros", groups * 32),
        ],
        n,
    )
}

/// Two-tier binarization baseline with salient columns and block scales,
/// `n = d_out`, `m = d_in`, block size `k`, salient column count `c`:
///
/// ```text
/// 2nc + ⌈m/k⌉·3n·16  +  n(m−c) + ⌈m/k⌉·2n·16·2  +  nm + m
/// ```
pub fn billm_bits(dims: LayerDims, block_k: usize, salient_c: usize) -> Result<MemoryReport> {
    assert!(block_k >= 1, "block_k must be at least 1");
    let (n, m) = (dims.d_out as u64, dims.d_in as u64);
    let (k, c) = (block_k as u64, salient_c as u64);
    if c > m {
        return Err(Error::OutOfRange(format!(
            "salient columns {c} exceed d_in {m}"
        )));
    }
    let blocks = ceil_div(m, k);
    Ok(MemoryReport::new(
        vec![
            ("salient binary (2-bit)", 2 * n * c),
            ("second-order scales", blocks * 3 * n * 16),
            ("base binary", n * (m - c)),
            ("first-order scales", blocks * 2 * n * 16 * 2),
            ("bitmaps", n * m + m),
        ],
        dims.n_params(),
    ))
}

/// Row-column-scaled variant of the two-tier baseline:
///
/// ```text
/// 2nc + (⌈m/k⌉·2n + 2c)·16  +  n(m−c) + (⌈m/k⌉·n + (m−c))·16·2  +  nm + m
/// ```
pub fn arb_bits(dims: LayerDims, block_k: usize, salient_c: usize) -> Result<MemoryReport> {
    assert!(block_k >= 1, "block_k must be at least 1");
    let (n, m) = (dims.d_out as u64, dims.d_in as u64);
    let (k, c) = (block_k as u64, salient_c as u64);
    if c > m {
        return Err(Error::OutOfRange(format!(
            "salient columns {c} exceed d_in {m}"
        )));
    }
    let blocks = ceil_div(m, k);
    Ok(MemoryReport::new(
        vec![
            ("salient binary (2-bit)", 2 * n * c),
            ("second-order scales", (blocks * 2 * n + 2 * c) * 16),
            ("base binary", n * (m - c)),
            ("first-order scales", (blocks * n + (m - c)) * 16 * 2),
            ("bitmaps", n * m + m),
        ],
        dims.n_params(),
    ))
}

/// Rank affordable by a plain 16-bit low-rank factorization at the same
/// budget: `r = ⌊B·N / (16(d_in+d_out))⌋`, charging only the two factor
/// matrices (no scale vectors). Returns 0 when the budget affords no rank
/// at all (an empty model).
pub fn fp16_rank_for_budget(dims: LayerDims, budget_bpp: f64) -> usize {
    (budget_bits(dims, budget_bpp) / (16 * dims.dim_sum())) as usize
}

/// Per-layer accounting method named in a layer manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetMethod {
    /// Two-path scaled-binary layer at the manifest's bpp budget.
    LittleBit,
    OneBit,
    Gptq,
    Billm,
    Arb,
    /// Uncompressed 16-bit reference, `16·N` bits.
    Fp16,
}

impl BudgetMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BudgetMethod::LittleBit => "littlebit",
            BudgetMethod::OneBit => "onebit",
            BudgetMethod::Gptq => "gptq",
            BudgetMethod::Billm => "billm",
            BudgetMethod::Arb => "arb",
            BudgetMethod::Fp16 => "fp16",
        }
    }
}

impl std::str::FromStr for BudgetMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "littlebit" => Ok(BudgetMethod::LittleBit),
            "onebit" => Ok(BudgetMethod::OneBit),
            "gptq" => Ok(BudgetMethod::Gptq),
            "billm" => Ok(BudgetMethod::Billm),
            "arb" => Ok(BudgetMethod::Arb),
            "fp16" => Ok(BudgetMethod::Fp16),
            other => Err(Error::Parse(format!("unknown budget method '{other}'"))),
        }
    }
}

/// One line of a layer manifest.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub name: String,
    pub dims: LayerDims,
    pub method: BudgetMethod,
    pub bpp: f64,
}

/// Parses the line-oriented manifest format `name d_out d_in method bpp`,
/// one layer per line; `#` starts a comment, blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!(
                "manifest line {}: expected 'name d_out d_in method bpp', got {} fields",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_dim = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| {
                Error::Parse(format!("manifest line {}: bad {what} '{s}'", lineno + 1))
            })
        };
        let dims = LayerDims::new(parse_dim(fields[1], "d_out")?, parse_dim(fields[2], "d_in")?)
            .map_err(|e| Error::Parse(format!("manifest line {}: {e}", lineno + 1)))?;
        let method: BudgetMethod = fields[3]
            .parse()
            .map_err(|e| Error::Parse(format!("manifest line {}: {e}", lineno + 1)))?;
        let bpp = fields[4].parse::<f64>().map_err(|_| {
            Error::Parse(format!(
                "manifest line {}: bad bpp '{}'",
                lineno + 1,
                fields[4]
            ))
        })?;
        if !bpp.is_finite() || bpp <= 0.0 {
            return Err(Error::Parse(format!(
                "manifest line {}: bpp must be positive",
                lineno + 1
            )));
        }
        entries.push(ManifestEntry {
            name: fields[0].to_string(),
            dims,
            method,
            bpp,
        });
    }
    Ok(entries)
}

/// Accounting result for one manifest layer.
#[derive(Debug, Clone)]
pub struct LayerBudget {
    pub name: String,
    pub dims: LayerDims,
    pub method: BudgetMethod,
    /// Rank chosen by budget inversion; only meaningful for rank-based methods.
    pub rank: Option<usize>,
    pub report: MemoryReport,
}

/// Aggregated accounting of a whole model.
#[derive(Debug, Clone)]
pub struct ModelReport {
    pub layers: Vec<LayerBudget>,
    /// Linear layers only.
    pub body: MemoryReport,
    /// Body plus the declared extra parameters at 16 bits each.
    pub total: MemoryReport,
}

fn layer_budget(entry: &ManifestEntry) -> Result<LayerBudget> {
    let dims = entry.dims;
    let (rank, report) = match entry.method {
        BudgetMethod::LittleBit => {
            let r = littlebit_rank_for_budget(dims, entry.bpp)?;
            (Some(r), littlebit_bits(dims, r))
        }
        BudgetMethod::OneBit => (None, onebit_bits(dims)),
        BudgetMethod::Gptq => (None, gptq_bits(dims, 128)),
        BudgetMethod::Billm => (None, billm_bits(dims, 128, 128)?),
        BudgetMethod::Arb => (None, arb_bits(dims, 128, 128)?),
        BudgetMethod::Fp16 => (
            None,
            MemoryReport::new(vec![("fp16 weights", 16 * dims.n_params())], dims.n_params()),
        ),
    };
    Ok(LayerBudget {
        name: entry.name.clone(),
        dims,
        method: entry.method,
        rank,
        report,
    })
}

/// Sums per-layer footprints; `extra_params` (embeddings, norms, any
/// non-linear-layer weights) are charged at 16 bits each and reported in the
/// total but not the body.
pub fn model_aggregate(entries: &[ManifestEntry], extra_params: u64) -> Result<ModelReport> {
    if entries.is_empty() {
        return Err(Error::Degenerate("empty layer manifest".into()));
    }
    let layers: Vec<LayerBudget> = entries.iter().map(layer_budget).collect::<Result<_>>()?;
    let body_params: u64 = layers.iter().map(|l| l.dims.n_params()).sum();
    let body_breakdown: Vec<(String, u64)> = layers
        .iter()
        .map(|l| (l.name.clone(), l.report.total_bits()))
        .collect();
    let body = MemoryReport::from_owned(body_breakdown, body_params);
    let total = MemoryReport::from_owned(
        vec![
            ("body".to_string(), body.total_bits()),
            ("extra parameters @16".to_string(), 16 * extra_params),
        ],
        body_params + extra_params,
    );
    Ok(ModelReport {
        layers,
        body,
        total,
    })
}
