pub mod cli;
pub mod error;
pub mod imageproc;
pub mod io;
pub mod maskrcnn;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
