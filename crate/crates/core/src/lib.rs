//! Local bits-back coding with normalizing flows.

pub mod ans;
pub mod archive;
pub mod dequant;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod harness;
pub mod lbb;
pub mod selftest;
pub mod tensor;
pub mod toy;
mod wire;

pub use error::{Error, Result};
