//! Command-line front end for the dividend/reinsurance solver: JSON run
//! configurations, solve/verify/sweep artifacts, and a closed-form oracle
//! printer.
//!
//! The library surface exists for the command implementations and their
//! tests; the `divopt` binary is a thin argument-parsing wrapper around
//! [`run`].

pub mod config;
pub mod report;
pub mod run;
