//! Files, configuration, the end-to-end pipeline and the command line for
//! the GenFormer generator. The numerics live in [`genformer_core`].

pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use genformer_core;
