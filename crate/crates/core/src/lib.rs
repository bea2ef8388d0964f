// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Photon-statistics analysis chain: time-tag stream parsing, flash
//! clustering with time-walk correction, multi-fold coincidence
//! correlation, photon-number-resolving statistics, and a Monte Carlo
//! source/detector simulator used as ground truth.

pub mod clusterer;
pub mod correlator;
pub mod eventstream;
pub mod pipeline;
pub mod pnrstats;
pub mod simsource;

pub use eventstream::{FormatError, FrameStack, RawHit, StreamHeader};
