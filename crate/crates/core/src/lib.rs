//! Event-driven behavioral simulator of the time difference encoder (TDE).
//!
//! * [`tde`]: single-unit model with closed-form evolution between events.
//! * [`mismatch`]: Monte Carlo charge analysis of the two circuit variants.
//! * [`events`]: address events, event files and a moving-texture stimulus.
//! * [`network`]: sparse arrays of oriented TDE units for optical flow.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod events;
pub mod exec;
pub mod mismatch;
pub mod network;
pub mod numfmt;
pub mod rng;
pub mod tde;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use error::{Error, Result};
pub use events::{Event, Geometry, Polarity, TextureConfig};
pub use exec::Exec;
pub use mismatch::{McResult, MismatchSpec};
pub use network::{Orientation, Raster, ReceptiveField, TdeNetwork};
pub use tde::{SpikeTrain, TdeParams, TdeState, TdeVariant};
