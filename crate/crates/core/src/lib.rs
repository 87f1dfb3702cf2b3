//! Intra-vehicle 60 GHz channel prediction.
//!
//! Synthetic clustered-multipath channel transfer functions, a two-layer LSTM
//! that predicts CTF magnitude at unmeasured distances, and the analysis chain
//! that turns CTFs into power delay profiles, tapped delay lines and Monte
//! Carlo BER curves.

pub mod ber;
pub mod dsp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
