//! Library surface of the command line front end: the benchmark harness and
//! the file-level pipeline runners, kept callable so integration tests drive
//! the same code paths as the binary.

pub mod bench;
pub mod runner;
