//! Power-law spectrum models: synthesis of test matrices with a prescribed
//! singular-value decay, decay-rate estimation, and the analytic break-even
//! test that decides when a binarized two-factor model beats plain rank
//! truncation at equal memory.

use crate::linalg::{gaussian, matmul_nt, qr_thin_q, seeded_rng};
use crate::{Error, Result, WeightMatrix};

/// Lower limit of the quantization-cost integral.
///
/// The continuous approximation `∫ C²x^(−2γ) dx` diverges at 0 for γ ≥ 0.5;
/// the discrete spectrum it models starts at k = 1, so the integral does too.
pub const QUANT_COST_LOWER_LIMIT: f64 = 1.0;

/// A modeled spectrum σ_k = C·k^(−γ) for k = 1..=rank_d, zero beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    gamma: f64,
    scale_c: f64,
    rank_d: usize,
}

impl SpectrumModel {
    pub fn new(gamma: f64, scale_c: f64, rank_d: usize) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::OutOfRange(format!("decay rate {gamma} must be finite and >= 0")));
        }
        if !scale_c.is_finite() || scale_c <= 0.0 {
            return Err(Error::OutOfRange(format!("scale {scale_c} must be finite and > 0")));
        }
        if rank_d == 0 {
            return Err(Error::RankOutOfRange("modeled rank must be >= 1".into()));
        }
        Ok(Self { gamma, scale_c, rank_d })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn scale_c(&self) -> f64 {
        self.scale_c
    }

    pub fn rank_d(&self) -> usize {
        self.rank_d
    }

    /// σ_k for k = 1..=rank_d, non-increasing.
    pub fn singular_values(&self) -> Vec<f64> {
        (1..=self.rank_d)
            .map(|k| self.scale_c * (k as f64).powf(-self.gamma))
            .collect()
    }
}

/// Outcome of the truncation-vs-binarization energy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakEvenReport {
    /// Spectral energy recovered by extending the rank from `rank_a` to `rank_b`.
    pub tail_gain: f64,
    /// Energy lost to binarization across the whole retained band.
    pub quant_cost: f64,
    /// `tail_gain > quant_cost`.
    pub binary_wins: bool,
    pub gamma: f64,
    pub lambda_coeff: f64,
    pub rank_a: usize,
    pub rank_b: usize,
}

/// Closed-form `∫_a^b c²·x^(−2γ) dx`, switching to the log antiderivative
/// when 2γ = 1.
pub fn energy_integral(c: f64, gamma: f64, a: f64, b: f64) -> f64 {
    let p = 1.0 - 2.0 * gamma;
    if p.abs() < 1e-12 {
        c * c * (b.ln() - a.ln())
    } else {
        c * c * (b.powf(p) - a.powf(p)) / p
    }
}

/// Builds `W = U·diag(σ)·Vᵀ` with seeded random orthonormal `U`, `V` and
/// σ_k = C·k^(−γ). Deterministic: a fixed seed gives a bitwise-identical
/// matrix. Each basis column is sign-fixed so its first nonzero entry is
/// positive.
pub fn synth_power_law(
    d_out: usize,
    d_in: usize,
    model: &SpectrumModel,
    seed: u64,
) -> Result<WeightMatrix> {
    if d_out == 0 || d_in == 0 {
        return Err(Error::DimensionMismatch("matrix dimensions must be positive".into()));
    }
    if model.rank_d > d_out.min(d_in) {
        return Err(Error::RankOutOfRange(format!(
            "modeled rank {} exceeds min dimension {}",
            model.rank_d,
            d_out.min(d_in)
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut u = qr_thin_q(gaussian(d_out, model.rank_d, &mut rng).view());
    let mut v = qr_thin_q(gaussian(d_in, model.rank_d, &mut rng).view());
    for m in [&mut u, &mut v] {
        for k in 0..model.rank_d {
            let lead = m.column(k).iter().copied().find(|&x| x != 0.0).unwrap_or(1.0);
            if lead < 0.0 {
                m.column_mut(k).iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    let sigma = model.singular_values();
    for (k, &s) in sigma.iter().enumerate() {
        u.column_mut(k).iter_mut().for_each(|x| *x *= s);
    }
    Ok(matmul_nt(u.view(), v.view()))
}

/// Least-squares fit of `log σ_k` against `log k`; returns the negated
/// slope, i.e. the decay rate γ of the best power-law model.
///
/// Values below `1e3 · ε · σ_1` are excluded (numerically-zero tail); at
/// least 8 values must survive the cut.
pub fn estimate_gamma(singular_values: &[f64]) -> Result<f64> {
    for &s in singular_values {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::OutOfRange(format!(
                "singular value {s} must be finite and > 0"
            )));
        }
    }
    let cutoff = singular_values.first().copied().unwrap_or(0.0) * 1e3 * f64::EPSILON;
    let pts: Vec<(f64, f64)> = singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cutoff)
        .map(|(i, &s)| (((i + 1) as f64).ln(), s.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Degenerate(format!(
            "need at least 8 usable singular values, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    Ok(-sxy / sxx)
}

/// Evaluates whether doubling down on rank (binary factors at rank `rank_b`)
/// recovers more energy than binarization loses, relative to exact factors
/// truncated at rank `rank_a`, under the modeled spectrum.
pub fn breakeven_predict(
    model: &SpectrumModel,
    lambda_coeff: f64,
    rank_a: usize,
    rank_b: usize,
) -> Result<BreakEvenReport> {
    if !(0.0..=1.0).contains(&lambda_coeff) {
        return Err(Error::OutOfRange(format!(
            "distortion coefficient {lambda_coeff} outside [0,1]"
        )));
    }
    if rank_a < 1 || rank_a >= rank_b || rank_b > model.rank_d {
        return Err(Error::RankOutOfRange(format!(
            "need 1 <= rank_a < rank_b <= {}, got rank_a={rank_a} rank_b={rank_b}",
            model.rank_d
        )));
    }
    let tail_gain = energy_integral(model.scale_c, model.gamma, rank_a as f64, rank_b as f64);
    let quant_cost = lambda_coeff
        * energy_integral(
            model.scale_c,
            model.gamma,
            QUANT_COST_LOWER_LIMIT,
            rank_b as f64,
        );
    Ok(BreakEvenReport {
        tail_gain,
        quant_cost,
        binary_wins: tail_gain > quant_cost,
        gamma: model.gamma,
        lambda_coeff,
        rank_a,
        rank_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::thin_svd;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flat_spectrum_is_all_ones() {
        let m = SpectrumModel::new(0.0, 1.0, 8).unwrap();
        assert!(m.singular_values().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn model_validation() {
        assert!(SpectrumModel::new(-0.1, 1.0, 4).is_err());
        assert!(SpectrumModel::new(0.3, 0.0, 4).is_err());
        assert!(SpectrumModel::new(0.3, 1.0, 0).is_err());
        let m = SpectrumModel::new(0.7, 2.0, 16).unwrap();
        let s = m.singular_values();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn synth_is_deterministic() {
        let m = SpectrumModel::new(0.4, 1.5, 12).unwrap();
        let a = synth_power_law(24, 18, &m, 7).unwrap();
        let b = synth_power_law(24, 18, &m, 7).unwrap();
        assert_eq!(a, b);
        let c = synth_power_law(24, 18, &m, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_recovers_spectrum() {
        let m = SpectrumModel::new(0.4, 2.0, 32).unwrap();
        let w = synth_power_law(64, 48, &m, 3).unwrap();
        let (_, s, _) = thin_svd(w.view()).unwrap();
        let want = m.singular_values();
        for (got, want) in s.iter().zip(&want) {
            assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
        }
        let frob_sq: f64 = w.iter().map(|x| x * x).sum();
        let energy: f64 = want.iter().map(|s| s * s).sum();
        assert!((frob_sq - energy).abs() <= 1e-6 * energy);
    }

    #[test]
    fn synth_rejects_oversized_rank() {
        let m = SpectrumModel::new(0.4, 1.0, 32).unwrap();
        assert!(synth_power_law(16, 64, &m, 0).is_err());
        assert!(synth_power_law(0, 64, &m, 0).is_err());
    }

    #[test]
    fn gamma_exact_log_linear() {
        let sigma: Vec<f64> = (1..=100).map(|k| (k as f64).powf(-0.5)).collect();
        assert_abs_diff_eq!(estimate_gamma(&sigma).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn gamma_scale_invariant() {
        let sigma: Vec<f64> = (1..=50).map(|k| 3.0 * (k as f64).powf(-0.31)).collect();
        let scaled: Vec<f64> = sigma.iter().map(|s| 1e-4 * s).collect();
        let a = estimate_gamma(&sigma).unwrap();
        let b = estimate_gamma(&scaled).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        assert_abs_diff_eq!(a, 0.31, epsilon = 1e-10);
    }

    #[test]
    fn gamma_ignores_numerical_zero_tail() {
        let mut sigma: Vec<f64> = (1..=40).map(|k| (k as f64).powf(-0.25)).collect();
        let clean = estimate_gamma(&sigma).unwrap();
        sigma.extend([1e-14, 1e-15, 1e-16]);
        let with_tail = estimate_gamma(&sigma).unwrap();
        assert_abs_diff_eq!(clean, with_tail, epsilon = 1e-12);
    }

    #[test]
    fn gamma_input_validation() {
        assert!(estimate_gamma(&[1.0; 7]).is_err());
        assert!(estimate_gamma(&[1.0, 0.9, 0.0, 0.8, 0.7, 0.6, 0.5, 0.4]).is_err());
        let tiny = vec![1.0, 1e-18, 1e-18, 1e-18, 1e-18, 1e-18, 1e-18, 1e-18, 1e-18];
        assert!(estimate_gamma(&tiny).is_err());
    }

    #[test]
    fn synthesis_gamma_round_trip() {
        let m = SpectrumModel::new(0.3, 1.0, 256).unwrap();
        let w = synth_power_law(256, 256, &m, 11).unwrap();
        let (_, s, _) = thin_svd(w.view()).unwrap();
        let got = estimate_gamma(s.as_slice().unwrap()).unwrap();
        assert!((got - 0.30).abs() <= 0.01, "estimated {got}");
    }

    #[test]
    fn breakeven_golden_case() {
        let m = SpectrumModel::new(0.25, 1.0, 200).unwrap();
        let r = breakeven_predict(&m, 0.3, 10, 160).unwrap();
        let want_gain = 2.0 * (160f64.sqrt() - 10f64.sqrt());
        let want_cost = 0.3 * 2.0 * (160f64.sqrt() - 1.0);
        assert_abs_diff_eq!(r.tail_gain, want_gain, epsilon = 1e-10);
        assert_abs_diff_eq!(r.quant_cost, want_cost, epsilon = 1e-10);
        assert_abs_diff_eq!(r.tail_gain, 18.97, epsilon = 0.005);
        assert_abs_diff_eq!(r.quant_cost, 6.99, epsilon = 0.005);
        assert!(r.binary_wins);
    }

    #[test]
    fn breakeven_zero_distortion_always_wins() {
        let m = SpectrumModel::new(0.7, 0.5, 100).unwrap();
        let r = breakeven_predict(&m, 0.0, 5, 80).unwrap();
        assert_eq!(r.quant_cost, 0.0);
        assert!(r.tail_gain > 0.0);
        assert!(r.binary_wins);
    }

    #[test]
    fn breakeven_log_form_at_half() {
        let m = SpectrumModel::new(0.5, 2.0, 64).unwrap();
        let r = breakeven_predict(&m, 0.25, 4, 16).unwrap();
        assert_abs_diff_eq!(r.tail_gain, 4.0 * (16f64 / 4.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.quant_cost, 0.25 * 4.0 * 16f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn breakeven_validation() {
        let m = SpectrumModel::new(0.25, 1.0, 64).unwrap();
        assert!(breakeven_predict(&m, 1.5, 4, 16).is_err());
        assert!(breakeven_predict(&m, 0.5, 16, 16).is_err());
        assert!(breakeven_predict(&m, 0.5, 0, 16).is_err());
        assert!(breakeven_predict(&m, 0.5, 4, 65).is_err());
    }

    #[test]
    fn breakeven_monotone_in_lambda() {
        let m = SpectrumModel::new(0.35, 1.0, 128).unwrap();
        let mut prev_wins = true;
        for i in 0..=20 {
            let lam = i as f64 / 20.0;
            let r = breakeven_predict(&m, lam, 8, 100).unwrap();
            if !prev_wins {
                assert!(!r.binary_wins, "win flipped back on at lambda={lam}");
            }
            prev_wins = r.binary_wins;
        }
    }
}
