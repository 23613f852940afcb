pub mod drive;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod hilbert;
pub mod rng;
pub mod signal;
pub mod theory;
pub mod trajectories;

pub use error::{Error, Result};
