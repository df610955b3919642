pub mod activation;
pub mod block;
pub mod cli;
pub mod error;
pub mod gradcheck;
pub mod data;
pub mod inception;
pub mod sampler;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
