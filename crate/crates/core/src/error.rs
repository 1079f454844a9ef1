use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data or arguments.
    #[error("input error: {0}")]
    Input(String),

    /// Experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A search or enumeration would exceed its configured budget.
    #[error("budget error: enumeration needs {required} models, cap is {cap}")]
    Budget { required: u128, cap: u128 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
