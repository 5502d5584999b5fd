pub mod classical;
pub mod config;
pub mod detector;
pub mod error;
pub mod gqs;
pub mod grid;
pub mod inference;
pub mod io;
pub mod physics;
pub mod sampling;
pub mod special;

pub use error::{Error, Result};
