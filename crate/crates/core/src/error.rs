use thiserror::Error;

/// Errors produced by the estimation, deviation and design pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("noise estimation failed for ({observable}, {condition}): {reason}")]
    Noise { observable: String, condition: String, reason: String },

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("all {restarts} restarts failed to converge")]
    FitFailed { restarts: usize, objectives: Vec<f64> },

    #[error("bootstrap discarded {discarded} of {total} resamples")]
    Bootstrap { discarded: usize, total: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("study invalid: {excluded} of {trials} trials excluded")]
    StudyInvalid { excluded: usize, trials: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("failed to parse TOML: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("failed to write TOML: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::Toml(_) | Error::TomlSer(_) => 2,
            Error::Integration { .. }
            | Error::FitFailed { .. }
            | Error::Bootstrap { .. }
            | Error::Infeasible(_)
            | Error::StudyInvalid { .. } => 3,
            Error::Data(_) | Error::Noise { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
