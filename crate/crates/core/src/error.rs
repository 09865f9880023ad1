use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("tensor budget exceeded by term {term}: {entries} scalars requested, {budget} allowed")]
    Budget {
        term: String,
        entries: u128,
        budget: u128,
    },

    #[error("quadrature did not converge: {message} (residual {residual:e})")]
    Quadrature { message: String, residual: f64 },

    #[error(
        "coefficient law mismatch: tuple sum {tuple_sum} vs N*xi(R) {closed_form} (rel err {rel_err:e})"
    )]
    CoefficientLaw {
        tuple_sum: f64,
        closed_form: f64,
        rel_err: f64,
    },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
