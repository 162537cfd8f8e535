use std::path::PathBuf;

/// Errors produced by the simulation, identification and control layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration blowup at t_zone={t_zone}, t_wall={t_wall}")]
    IntegrationBlowup { t_zone: f64, t_wall: f64 },

    #[error("regressors are not identifiable: {0}")]
    Identifiability(String),

    #[error("insufficient history: {0}")]
    Coverage(String),

    #[error("cold start: {0}")]
    ColdStart(String),

    #[error("infeasible rollout")]
    InfeasibleRollout,

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
