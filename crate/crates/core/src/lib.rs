//! Second-moment thresholds for multi-species spherical mixed p-spin models.
//!
//! * [`mixture`]: mixture polynomials and their calculus.
//! * [`landscape`]: the overlap-space functionals and their global maxima.
//! * [`criticality`]: `beta_m`, `beta_m_tilde`, `beta_H` and the verdict.
//! * [`montecarlo`]: finite-N disorder, Hamiltonian and estimators.
//! * [`cli`]: the command-line front end.

pub mod cli;
pub mod criticality;
pub mod error;
pub mod landscape;
pub mod linalg;
pub mod mixture;
pub mod model;
pub mod montecarlo;

pub use criticality::{CritOptions, CritReport, Verdict};
pub use error::{Error, Result};
pub use landscape::{MaximizeResult, Objective, OverlapVector};
pub use mixture::{Mixture, MultiIndex, SpeciesSet};
pub use model::ModelSpec;
