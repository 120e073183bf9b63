pub mod coupling;
pub mod error;
pub mod fpp;
pub mod lattice;
pub mod lawcore;
pub mod lpp;
pub mod mclab;
pub mod metrics;
pub mod oracle;
pub mod polymer;
pub mod rng;

pub use error::{Error, Result};
