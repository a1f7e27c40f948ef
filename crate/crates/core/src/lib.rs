//! Discrete-event simulator for networked control loops that share one
//! wireless hop.
//!
//! Each loop samples a linear plant, sends the sample through a medium-access
//! protocol, and controls the plant from the freshest sample that got
//! through. The crate covers controller synthesis, the age-to-error law,
//! seven access protocols, a collision channel, the event engine, and the
//! experiment drivers behind the `ncsim` binary.

pub mod aoi;
pub mod channel;
pub mod control;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mac;
pub mod sim;

pub use error::{Error, Result};
