//! File formats, configuration, the annotation service, the command line
//! and the synthetic fixture, on top of `curated-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod plot;
pub mod server;
pub mod synth;
