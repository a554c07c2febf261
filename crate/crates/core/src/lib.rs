//! Adaptive short-time Fourier transforms and synchrosqueezing with a
//! time-varying Gaussian window.

pub mod config;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod phase;
pub mod ridge;
pub mod separability;
pub mod signal;
pub mod sst;
pub mod stft;
pub mod window;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rustfft::num_complex::Complex64;
