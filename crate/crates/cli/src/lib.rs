//! Command-line companion for the stochastic splat renderer: file formats,
//! flag handling, and the subcommand workflows.

pub mod io;
pub mod opts;
pub mod run;
