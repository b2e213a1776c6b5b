//! Decay-rate sweep driver: at one bit budget, compare binary compression
//! arms against the tiny-rank float baseline across synthetic spectra.
//!
//! One cell = one (γ, seed) pair. The cell synthesizes its matrix, runs the
//! singular value decomposition once, and evaluates every arm from that
//! shared decomposition, so a sweep costs one factorization per cell instead
//! of one per arm, and binary-arm results are bit-identical to running
//! [`compress_layer`] on the same matrix.

use crate::budget::{fp16_rank_for_budget, littlebit_rank_for_paths, LayerDims};
use crate::factorize::factors_from_svd;
use crate::linalg::{splitmix64, thin_svd};
use crate::metrics::mse;
use crate::quantize::{
    quantize_from_factors, quantize_one, reconstruct_path, Method, RotationSource,
};
use crate::spectral::{synth_power_law, SpectrumModel};
use crate::{Error, Result};

/// One competitor in a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// Scaled-binary compression with the given rotation method.
    Binary(Method),
    /// Keep the largest affordable rank in 16-bit floats, drop the rest.
    Fp16,
}

impl Arm {
    pub fn name(&self) -> &'static str {
        match self {
            Arm::Binary(m) => m.name(),
            Arm::Fp16 => "fp16",
        }
    }
}

/// Outcome of one arm in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub arm: Arm,
    /// Rank the budget afforded this arm.
    pub rank: usize,
    /// Mean squared reconstruction error against the cell's matrix.
    pub mse: f64,
}

/// Fixed parameters shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub d_out: usize,
    pub d_in: usize,
    /// Bit budget per original parameter, applied to every arm.
    pub bpp: f64,
    pub arms: Vec<Arm>,
    /// Two-path layout for binary arms.
    pub residual: bool,
    /// Refinement rounds for joint-ITQ arms.
    pub iterations: usize,
    /// Leading coefficient C of the synthetic spectrum.
    pub spectrum_scale: f64,
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        LayerDims::new(self.d_out, self.d_in)?;
        if !self.bpp.is_finite() || self.bpp <= 0.0 {
            return Err(Error::OutOfRange(format!(
                "budget {} bpp must be finite and > 0",
                self.bpp
            )));
        }
        if self.arms.is_empty() {
            return Err(Error::OutOfRange("sweep needs at least one arm".into()));
        }
        if !self.spectrum_scale.is_finite() || self.spectrum_scale <= 0.0 {
            return Err(Error::OutOfRange(format!(
                "spectrum scale {} must be finite and > 0",
                self.spectrum_scale
            )));
        }
        Ok(())
    }
}

/// Evaluates every configured arm on the synthetic matrix of one (γ, seed)
/// cell, reusing a single decomposition of it.
pub fn run_cell(gamma: f64, seed: u64, cfg: &SweepConfig) -> Result<Vec<ArmResult>> {
    cfg.validate()?;
    let dims = LayerDims::new(cfg.d_out, cfg.d_in)?;
    let full_rank = cfg.d_out.min(cfg.d_in);
    let model = SpectrumModel::new(gamma, cfg.spectrum_scale, full_rank)?;
    let w = synth_power_law(cfg.d_out, cfg.d_in, &model, seed)?;
    let (u, sigma, v) = thin_svd(w.view())?;
    let sigma = sigma.as_slice().unwrap();
    let n = dims.n_params() as f64;

    let mut out = Vec::with_capacity(cfg.arms.len());
    for &arm in &cfg.arms {
        let res = match arm {
            Arm::Fp16 => {
                let rank = fp16_rank_for_budget(dims, cfg.bpp).min(full_rank);
                let tail: f64 = sigma[rank..].iter().map(|s| s * s).sum();
                ArmResult { arm, rank, mse: tail / n }
            }
            Arm::Binary(method) => {
                let paths = if cfg.residual { 2 } else { 1 };
                let rank = littlebit_rank_for_paths(dims, cfg.bpp, paths)?;
                if rank == 0 || rank > full_rank {
                    return Err(Error::RankOutOfRange(format!(
                        "budget {} bpp gives binary rank {rank}, outside 1..={full_rank}",
                        cfg.bpp
                    )));
                }
                let factors = factors_from_svd(&u, sigma, &v, rank)?;
                let (first, _, _) = quantize_from_factors(
                    factors,
                    RotationSource::Fit(method, seed),
                    cfg.iterations,
                )?;
                let mut rec = reconstruct_path(&first);
                if cfg.residual {
                    let error = &w - &rec;
                    let (second, _, _) = quantize_one(
                        &error,
                        rank,
                        RotationSource::Fit(method, splitmix64(seed)),
                        cfg.iterations,
                    )?;
                    rec += &reconstruct_path(&second);
                }
                ArmResult { arm, rank, mse: mse(&rec, &w)? }
            }
        };
        out.push(res);
    }
    Ok(out)
}

/// Evenly spaced γ grid from `start` to `end` inclusive, values rounded to
/// 10 decimals so grid points print cleanly.
pub fn gamma_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !start.is_finite() || !end.is_finite() || !step.is_finite() || step <= 0.0 || start < 0.0 {
        return Err(Error::OutOfRange(format!(
            "bad grid spec: start {start}, end {end}, step {step}"
        )));
    }
    if end < start {
        return Err(Error::OutOfRange(format!(
            "grid end {end} below start {start}"
        )));
    }
    let n = ((end - start) / step).round() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

/// Interpolated γ where a binary arm's error curve crosses the float
/// baseline's from below: the first grid interval where
/// `binary_mse − fp16_mse` changes sign from ≤ 0 to > 0.
///
/// `None` means no such crossing inside the grid (the arm either never wins
/// or never stops winning).
pub fn crossover_gamma(
    gammas: &[f64],
    binary_mse: &[f64],
    fp16_mse: &[f64],
) -> Result<Option<f64>> {
    if gammas.len() != binary_mse.len() || gammas.len() != fp16_mse.len() {
        return Err(Error::DimensionMismatch(format!(
            "curve lengths disagree: {} vs {} vs {}",
            gammas.len(),
            binary_mse.len(),
            fp16_mse.len()
        )));
    }
    if gammas.len() < 2 {
        return Err(Error::OutOfRange("need at least two grid points".into()));
    }
    if gammas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::OutOfRange("gamma grid must be strictly increasing".into()));
    }
    let diff: Vec<f64> = binary_mse
        .iter()
        .zip(fp16_mse)
        .map(|(b, f)| b - f)
        .collect();
    for i in 0..diff.len() - 1 {
        if diff[i] <= 0.0 && diff[i + 1] > 0.0 {
            let t = -diff[i] / (diff[i + 1] - diff[i]);
            return Ok(Some(gammas[i] + t * (gammas[i + 1] - gammas[i])));
        }
    }
    Ok(None)
}
