//! Stability and damping assessment of wide-area damping control loops with
//! variable measurement delay, modeled as switched discrete-time linear systems.

// `!(x > 0.0)` style guards are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod delaychain;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod pdcsim;
pub mod ssmodel;
pub mod stability;
pub mod timesim;

pub use error::{Error, Result};
