//! Hybrid least-squares approximation of functions from noisy point
//! evaluations.
//!
//! The crate builds weighted least-squares surrogates on an orthonormal
//! subspace when every sample of the target function carries substantial,
//! location-dependent noise that can only be beaten down by averaging
//! repeated evaluations. The central question is budget allocation: given
//! `L` total evaluations and `m` candidate sample sites, how many repeats
//! does each site get? Three allocation rules are provided (uniform, a
//! Neyman-style closed form, and a numerically optimized A-optimal design),
//! together with the induced-measure sampling, decoding, cone-projection,
//! and experiment-harness machinery needed to run end-to-end studies,
//! including a two-asset exchange-option pricing and calibration example.
//!
//! Entry points:
//! - [`basis::tensor_legendre_basis`] / [`basis::discretize_basis`] build the
//!   approximation subspace.
//! - [`sampler::sample_induced_continuous`] / [`sampler::boost`] draw sample
//!   sites with Christoffel weights.
//! - [`allocation::a_optimal_allocation`] and friends split the evaluation
//!   budget.
//! - [`decoder::run_hls`] / [`decoder::run_erm`] produce surrogates.
//! - [`harness::run_synthetic`] / [`harness::run_finance`] reproduce the
//!   packaged experiments; the `hls` binary wraps them.

pub mod allocation;
pub mod basis;
pub mod constraint;
pub mod decoder;
pub mod domain;
pub mod error;
pub mod finance;
pub mod harness;
pub mod random_subspace;
pub mod sampler;
pub mod table;

pub use allocation::{Allocation, AllocationKind, NoiseProfile};
pub use basis::{BasisSet, ChristoffelProfile};
pub use decoder::{Approximant, NoisyOracle, Pipeline};
pub use domain::{HyperRectangle, PointStream, ProductMeasure};
pub use error::{HlsError, Result};
pub use harness::{
    run_experiment, ExperimentConfig, ExperimentKind, ExperimentReport, OUTPUT_ROOT_ENV,
};
pub use sampler::SampleDesign;
