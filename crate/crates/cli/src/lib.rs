//! File formats, run manifests and the `mtscale` command line on top of
//! [`mtscale_core`].

pub mod cli;
pub mod commands;
pub mod exit;
pub mod io;
pub mod manifest;
pub mod run;
pub mod table;
