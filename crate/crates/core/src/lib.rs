pub mod detect;
pub mod error;
pub mod harness;
pub mod lss;
pub mod models;
pub mod noise;
pub mod quadrature;
pub mod spectral;
pub mod transforms;

pub use error::{Error, Result};
