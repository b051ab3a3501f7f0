use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid packet configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown preamble code index {0}")]
    UnknownCode(u32),
    #[error("unknown channel {0}")]
    UnknownChannel(u8),
    #[error("code table: {0}")]
    CodeTable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("timing intervals are unstable (spread {spread_us:.2} us exceeds {limit_us:.2} us)")]
    UnstableTiming { spread_us: f64, limit_us: f64 },
    #[error("attack delay {delay_us:.2} us is not positive")]
    ConfigTooTight { delay_us: f64 },
    #[error("sniffing exhausted stage {stage} without a match")]
    SniffFailed { stage: u8 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
