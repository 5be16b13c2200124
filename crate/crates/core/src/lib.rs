pub mod criteria;
pub mod ctmc;
pub mod dual;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod parallel;
pub mod rng;
pub mod seedbank;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
