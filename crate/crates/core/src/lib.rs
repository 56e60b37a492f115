pub mod error;
pub mod eval;
pub mod lie;
pub mod numerics;
pub mod operator;
pub mod pdegen;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
