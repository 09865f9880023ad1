//! Finite-N realization of the model.

pub mod disorder;
pub mod estimators;
pub mod finite;
pub mod quadrature;
pub mod rng;
pub mod second_moment;

pub use disorder::{
    covariance_exact, covariance_exact_with, sample_disorder, sample_disorder_with,
    CoefficientLaw, DisorderSample, DEFAULT_TENSOR_BUDGET,
};
pub use estimators::{
    estimate_band_free_energy, estimate_free_energy, estimate_level_set, EstimatorResult,
};
pub use finite::{overlap, sample_on_band, sample_uniform, Configuration, FiniteModel};
pub use rng::{derive_seed, Domain, KeyedStream};
pub use second_moment::log_e_z2_exact;
