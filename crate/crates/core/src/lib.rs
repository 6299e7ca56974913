//! Neural channel-capacity estimation.
//!
//! The crate pairs variational mutual-information estimators (critics) with a
//! neural distribution transformer (NDT) that learns the channel input law, and
//! trains both by alternating gradient ascent. Analytic capacities, tabulated
//! reference bounds and a Blahut-Arimoto solver are provided to check the
//! learned estimates.
//!
//! The crate is `no_std` + `alloc`; file formats, the command line and parallel
//! trial execution live in the `capbench` companion crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod bounds;
pub mod channels;
pub mod error;
pub mod estimators;
pub mod mac;
pub mod math;
pub mod ndt;
pub mod numerics;
pub mod reference;
pub mod trainer;

pub use error::{Error, Result};
