//! Markov chains in random environments: simulation, drift/minorization certificates,
//! mixing coefficients, coupling estimators and the bounds that connect them.

pub mod certify;
pub mod couple;
pub mod dynamics;
pub mod econ;
pub mod error;
pub mod linalg;
pub mod mixing;
pub mod oracle;
pub mod par;
pub mod report;
pub mod rng;
pub mod sgld;
pub mod stats;

pub use error::{Error, Result};
