use std::fmt;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Failures that originate in the CLI layer itself.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    ReplayMismatch(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) => f.write_str(m),
            CliError::ReplayMismatch(m) => write!(f, "replay mismatch: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn library_code(e: &tokenmetric::Error) -> i32 {
    use tokenmetric::Error::*;
    match e {
        InvalidParameter(_) | Incompatible(_) | MissingLayout | EmptyDataset => EXIT_USAGE,
        Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tokenmetric::Error>() {
            return library_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Input(_) => EXIT_INPUT,
                CliError::ReplayMismatch(_) => EXIT_NUMERIC,
            };
        }
    }
    EXIT_INPUT
}
