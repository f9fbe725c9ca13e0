use thiserror::Error;

/// Errors raised by the library. Each variant names the module that failed so
/// the CLI can report it on a single line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("noise: {0}")]
    Noise(String),
    #[error("su2: {0}")]
    Geometry(String),
    #[error("dynamics: {0}")]
    Dynamics(String),
    #[error("averaging: {0}")]
    Averaging(String),
    #[error("spectral: {0}")]
    Spectral(String),
    #[error("fpt: {0}")]
    Fpt(String),
    #[error("stats: {0}")]
    Stats(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short module tag used in machine-readable CLI errors.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Noise(_) => "noise",
            Error::Geometry(_) => "su2",
            Error::Dynamics(_) => "dynamics",
            Error::Averaging(_) => "averaging",
            Error::Spectral(_) => "spectral",
            Error::Fpt(_) => "fpt",
            Error::Stats(_) => "stats",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
