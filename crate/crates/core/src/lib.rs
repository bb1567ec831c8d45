//! Masked-patch pretraining of transformer encoders for multichannel
//! physiological signals, with spatiotemporal and Fourier-domain
//! reconstruction targets.

pub mod cli;
pub mod error;
pub mod fourier;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod signal_io;

pub use error::{Error, Result};
