pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod interaction;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod suppression;
pub mod synth;
pub mod temporal;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
