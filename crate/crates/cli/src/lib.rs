//! Binary container formats and shared plumbing for the `lb2` binary.

pub mod container;
