//! Closed-form position and orientation error bounds for uplink mmWave
//! localization under transmit- and receive-side I/Q imbalance, together
//! with a waveform-level numerical cross-check and scenario sweep tooling.

pub mod array;
pub mod error;
pub mod export;
pub mod fim;
pub mod geometry;
mod linalg;
pub mod oracle;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};
