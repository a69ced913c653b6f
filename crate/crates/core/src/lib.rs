//! Tactile fingertip perception and control over a seeded synthetic sensor.
//!
//! The crate is split the same way the fingertip's data flows:
//!
//! * [`signal`] holds the stream types, the STFT, the RMS envelope and
//!   height synchronisation.
//! * [`sim`] generates strain and vibration data from a deterministic
//!   fingertip model and the experimental rigs.
//! * [`learn`] is a small multilayer perceptron with SGD + momentum.
//! * [`force`] calibrates the strain gauges into a planar force estimator.
//! * [`vibro`] covers material classification, stream voting and cup-edge
//!   event detection.
//! * [`control`] runs the pinching, cup unstacking and shake-and-select tasks.
//!
//! All randomness is driven by explicit seeds; [`seed::derive`] splits one
//! top-level seed into independent sub-streams.

pub mod control;
pub mod error;
pub mod force;
pub mod learn;
pub mod seed;
pub mod signal;
pub mod sim;
pub mod vibro;

pub use error::{Error, Result};
