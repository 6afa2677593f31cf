//! Diffusion teachers on low-dimensional data, distilled in a single fold
//! into students that run on any sub-sequence of the teacher's steps.

pub mod checks;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod net;
pub mod persistence;
pub mod plot;
pub mod process;
pub mod sample;
pub mod schedule;
pub mod train;

pub use error::{Error, Result};
