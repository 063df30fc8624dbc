pub mod cli;
pub mod config;
pub mod error;
pub mod magnetics;
pub mod optics;
pub mod plot;
pub mod plant;
pub mod quad;
pub mod servo;
pub mod specfun;
pub mod thermal;

pub use error::{Error, Result};
