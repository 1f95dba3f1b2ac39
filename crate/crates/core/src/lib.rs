//! Remote state estimation of an unstable linear plant over a lossy channel
//! shared by a legitimate user and an eavesdropper.
//!
//! The sensor encodes each packet as a difference against the last state the
//! user acknowledged. A user that keeps receiving stays optimal, while an
//! eavesdropper that misses one packet the user got loses track of the state
//! and her error grows at the plant's instability rate.


pub mod baselines;
pub mod channel;
pub mod code;
pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod harness;

pub mod plant;
pub mod rng;

pub use error::{Error, Result};
