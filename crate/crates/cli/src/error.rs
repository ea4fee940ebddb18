use imax_calib::CalibError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Fit(_) => "fit",
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        if e.is_fit_failure() {
            CliError::Fit(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parse a flag value, reporting failures as usage errors.
pub fn usage<T: std::str::FromStr<Err = CalibError>>(s: &str) -> CliResult<T> {
    s.parse().map_err(|e: CalibError| CliError::Usage(e.to_string()))
}
