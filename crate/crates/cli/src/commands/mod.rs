//! One module per subcommand, plus shared plumbing.

pub mod common;
pub mod diagnose;
pub mod fit;
pub mod loocheck;
pub mod permtest;
pub mod score;
pub mod simulate;
pub mod summarize;
