pub mod allocator;
pub mod bench;
pub mod cli;
pub mod composer;
pub mod error;
pub mod failure;
pub mod model;
pub mod scheduler;
pub mod simulator;

pub use error::{Error, Result};
