pub mod error;
pub mod fusion;
pub mod grid;
pub mod linalg;
pub mod physics;
pub mod pipeline;
pub mod simulator;
pub mod spectral;
pub mod state_space;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec};
