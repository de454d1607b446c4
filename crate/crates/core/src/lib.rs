//! Simulation and verification toolkit for MRT and zero third-order
//! distortion (Z3RO) precoding of large arrays with nonlinear power amplifiers.

pub mod array;
pub mod channel;
pub mod error;
pub mod pa;
pub mod metrics;
pub mod oracle;
pub mod experiment;
pub mod precoder;
pub mod radiation;

pub use error::{Error, Result};
