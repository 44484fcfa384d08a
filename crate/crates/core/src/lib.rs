pub mod channels;
pub mod classical;
pub mod cli;
pub mod error;
pub mod limits;
pub mod linalg;
pub mod maps;
pub mod observables;
pub mod spectral;
pub mod torus;

pub use error::{Error, Result};
