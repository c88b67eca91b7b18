pub mod algebra;
pub mod dd;
pub mod error;
mod fft;
pub mod inversion;
pub mod game;
pub mod harness;
pub mod oracle;
pub mod scalar;
pub mod semistable;

pub use error::{Error, Result};
pub use scalar::Real;
