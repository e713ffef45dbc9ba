//! Computational-unlearning games.
//!
//! A learning scheme, an unlearner and a distinguishing adversary are plugged
//! into a seeded security game. The adversary sees a freshly unlearned model
//! and a model retrained from scratch on the retained data, in random order,
//! and must say which is which. Its success rate with a Jeffreys credible
//! interval is the measure of how well the unlearner hides what it forgot.
//!
//! Every piece of randomness flows from a [`numerics::RngStream`] keyed by
//! `(seed, stream)`, so a game is a pure function of its configuration.

pub mod datasets;
pub mod distinguishers;
pub mod error;
pub mod game;
pub mod numerics;
pub mod scalar;
pub mod schemes;
pub mod unlearners;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense `f64` matrix, the element type used throughout the learning code.
pub type Mat = numerics::Matrix<f64>;
