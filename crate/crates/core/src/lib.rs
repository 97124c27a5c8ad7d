//! Random recurrent networks (reservoirs) for chaotic time-series prediction,
//! with delay-embedding diagnostics used to select and augment readout features.
//!
//! The crate is organised bottom-up:
//!
//! * [`signals`] generates the Mackey-Glass and stochastic FitzHugh-Nagumo series.
//! * [`embedding`] holds classical delay-embedding tools (ACF, false nearest
//!   neighbours, delay matrices).
//! * [`reservoir`] builds, drives and trains the network, and runs closed-loop
//!   prediction.
//! * [`takens`] relates node responses to delay coordinates: cross-correlation
//!   profiles, lag-window readout filters and the interstate distortion bounds.
//! * [`hybrid`] appends delayed copies of the state to the readout.
//! * [`control`] stabilises a noisy neuron using a network-predicted voltage.
//! * [`harness`] wires everything into reproducible, seeded experiments.

pub mod control;
pub mod embedding;
mod error;
pub mod harness;
pub mod hybrid;
pub mod linalg;
pub mod persist;
pub mod reservoir;
pub mod seeds;
pub mod signals;
pub mod stats;
pub mod takens;

pub use error::{Error, Result};
pub use signals::TimeSeries;
