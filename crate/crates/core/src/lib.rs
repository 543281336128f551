pub mod diffcore;
pub mod encoders;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod harness;
mod par;
pub mod simworld;
pub mod worldmodel;

pub use error::{Error, Result};
