//! Configuration, dispatch and table output for the `zefoz` tool.

pub mod config;
pub mod run;
pub mod table;

pub use config::{defaults_table, parse_config, Command, RunConfig};
pub use run::{execute, load_ion, run, Output, RunError};
pub use table::{format_float, write_table, Cell, Format, Table};
