pub mod error;
pub mod grid;
pub mod lattice;
pub mod maximal;
pub mod report;
pub mod runner;
pub mod solver;
pub mod spaces;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
