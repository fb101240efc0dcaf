//! File formats and shared plumbing for the `tlump` command-line tool.
//!
//! The binary's job is thin: parse arguments, read and write files, and
//! call into the core library. Everything that defines an on-disk format
//! lives here, so tests (and other tools) can produce and inspect the same
//! files the binary does.
//!
//! Three formats exist:
//!
//! * **Chain files** (`.tp`): a line-oriented text format for sparse
//!   row-stochastic matrices with a target set and discount factor.
//!   Numbers are written with 17 significant digits, so write-read-write
//!   round trips are byte-identical.
//! * **Filtration files** (JSON): the partitions of a refinement run,
//!   with the resolution used at each step.
//! * **Block maps and reports** (JSON): the state-to-block assignment of
//!   an aggregation, and distance reports.
//!
//! Every derived file embeds SHA-256 hashes of the files it was computed
//! from; consumers refuse to combine files whose lineage does not match.

pub mod error;
pub mod formats;
pub mod hash;
pub mod json;

pub use error::{CliError, CliResult};
