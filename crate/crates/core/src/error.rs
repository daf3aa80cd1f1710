use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside the domain where the model is defined.
    #[error("invalid `{field}`: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("intensity table has no coefficients for transition {from} -> {to}")]
    MissingCoefficient { from: u8, to: u8 },

    #[error("intensity table line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// The joint moment-matching system produced a probability below the
    /// admissible tolerance at the given lattice node.
    #[error("negative joint probability {value:e} at step {step}, rate node {rate_node}, account node {account_node}")]
    NegativeProbability {
        step: usize,
        rate_node: usize,
        account_node: usize,
        value: f64,
    },

    #[error("non-finite contract value at anniversary {anniversary}, health {health}, rate node {rate_node}, account node {account_node}")]
    NonFinite {
        anniversary: usize,
        health: u8,
        rate_node: usize,
        account_node: usize,
    },

    /// Even without the account-proportional fee the contract is worth less
    /// than the premium, so no non-negative fair fee exists.
    #[error("no fair fee: price at alpha = 0 is {price_at_zero:.6} < premium {premium}")]
    InfeasibleFee { price_at_zero: f64, premium: f64 },

    #[error("fair-fee search did not converge after {iterations} iterations (last alpha {alpha:e}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        alpha: f64,
        residual: f64,
    },

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }
}
