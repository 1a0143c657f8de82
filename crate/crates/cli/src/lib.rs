//! Command-line front end for `fembv-gpd`: CSV/JSON formats, run manifests
//! and the subcommands.

pub mod args;
pub mod commands;
pub mod fitfile;
pub mod io;
pub mod manifest;

pub use commands::{exit_code, run};
