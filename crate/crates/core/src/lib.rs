pub mod analysis;
pub mod config;
pub mod control;
pub mod error;
pub mod io;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod plant;
pub mod runner;
pub mod triggers;

pub use error::{Error, Result};
