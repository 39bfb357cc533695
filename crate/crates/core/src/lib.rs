pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod encoders;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod protocol;
pub mod prototype;
pub mod rrm;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
