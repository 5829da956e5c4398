//! Simulator for a coupled ring-oscillator array that evaluates 5x5
//! convolutions by frequency-encoding fragment/kernel differences and reading
//! out the synchronization strength ("degree of match", DOM) through a gated
//! peak detector.
//!
//! The pipeline is
//! [`encoding`] (pixels, Gabor kernels, IDAC codes, frequencies) →
//! [`dynamics`] (Kuramoto phases, averager, detector) →
//! [`calibration`] (coupling sweep and linear fit) →
//! [`harness`] (image convolution, comparison, energy estimate).

pub mod calibration;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod encoding;
pub mod error;
pub mod formats;
pub mod harness;
pub mod stats;

pub use error::{Error, Result};

/// Locale-independent float rendering with 10 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.9e}")
}
