//! Command implementations behind the `dpfactor` binary, exposed as a
//! library so the commands can be driven directly from integration tests.

pub mod commands;
pub mod config;

use dpfactor::Error;

/// Process exit code of an error: 1 for usage and configuration problems,
/// 2 for data problems, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) => 1,
        Error::Parse { .. }
        | Error::Data(_)
        | Error::DimensionMismatch(_)
        | Error::Io(_)
        | Error::Serde(_) => 2,
        Error::DegenerateSample(_)
        | Error::Numerical(_)
        | Error::SliceExceeded { .. }
        | Error::PermutationAborted { .. } => 3,
    }
}
