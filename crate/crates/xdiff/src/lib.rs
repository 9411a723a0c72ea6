//! File formats, configuration and the command-line driver around
//! [`xdiff_core`].

pub mod commands;
pub mod config;
pub mod parallel;
pub mod probing;
pub mod report;
pub mod trajfile;
