use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{message}")]
    InvalidScenario {
        field: &'static str,
        message: String,
    },

    #[error("lambert W0 is defined here only for finite y >= 0, got {0}")]
    LambertDomain(f64),

    #[error("expected {expected} slot prices, got {got}")]
    PriceArity { expected: usize, got: usize },

    #[error("price {price} for slot {slot} lies outside [{min}, {max}]")]
    PriceOutOfBox {
        slot: usize,
        price: f64,
        min: f64,
        max: f64,
    },

    #[error("value function entry at state index {0} is not finite")]
    NonFiniteValue(usize),

    #[error("value table has {got} entries, lattice has {expected} states")]
    ValueLength { expected: usize, got: usize },

    #[error("lattice has {states} states, above the configured limit of {limit}")]
    StateLimit { states: usize, limit: usize },

    #[error("no policy entry for t={t}, state {state}")]
    MissingPolicy { t: usize, state: String },

    #[error("invalid policy at t={t}, state {state}: {message}")]
    InvalidPolicy {
        t: usize,
        state: String,
        message: String,
    },

    #[error("simulation needs at least one replication")]
    NoReplications,

    #[error("arrival probability override {0} must lie in [0, 1)")]
    LambdaOverride(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidScenario {
            field,
            message: message.into(),
        }
    }
}
