//! File formats, dataset loading and the command-line driver around
//! [`fluency_core`].

pub mod alignment;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod fleb;
pub mod folds_file;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
