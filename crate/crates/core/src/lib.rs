//! Sub-1-bit matrix compression via scaled binary factorization.
//!
//! A dense weight matrix is approximated as
//!
//! ```text
//! W  ≈  diag(h) · U_b · diag(l) · V_bᵀ · diag(g)
//! ```
//!
//! where `U_b` and `V_b` are rank-`r` sign matrices stored one bit per entry
//! and `h`, `l`, `g` are floating-point scale vectors. The pipeline is:
//! truncated SVD ([`factorize::truncated_factorize`]), an optional orthogonal
//! rotation of the latent space, either random or optimized by alternating
//! sign-projection / Procrustes steps ([`factorize::joint_itq`]), rank-1
//! scale extraction from the factor magnitudes ([`factorize::dual_svid`]),
//! and binarization ([`quantize::compress_layer`]). An optional second path
//! fits the quantization error of the first.
//!
//! Around the compressor sit the analysis tools that predict and measure when
//! the binary route beats a plain tiny-rank float factorization at equal bit
//! budget: power-law spectrum synthesis and decay estimation ([`spectral`]),
//! distortion and coherence diagnostics ([`metrics`]), exact bit accounting
//! ([`budget`]), and a packed ±1 forward kernel ([`kernel`]).

pub mod budget;
pub mod error;
pub mod factorize;
pub mod kernel;
pub(crate) mod linalg;
pub mod metrics;
pub mod quantize;
pub mod spectral;
pub mod sweep;

pub use error::Error;

/// Dense real matrix with shape `(d_out, d_in)`. All internal arithmetic is f64.
pub type WeightMatrix = ndarray::Array2<f64>;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use ndarray;
