pub mod cli;
pub mod diagnostics;
pub mod encode;
pub mod error;
pub mod gate;
pub mod graph;
pub mod rdb;
pub mod syn;
pub mod synthgen;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
