use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("integration diverged at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("time {time} outside trajectory span [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error(
        "full trajectory recording needs {required} bytes, above the cap of {cap} bytes; \
         use the population_stats record mode"
    )]
    MemoryCap { required: u64, cap: u64 },

    #[error("population {0} has fewer than two neurons")]
    EmptyPopulation(usize),

    #[error("statistics: {0}")]
    Stats(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
