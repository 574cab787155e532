//! Sending-or-not-sending twin-field QKD: finite-key rate analysis, AOPP
//! error rejection, session simulation and source-parameter optimisation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aopp;
pub mod cli;
pub mod decoy;
pub mod error;
pub mod io;
pub mod keyrate;
pub mod model;
pub mod optimize;
pub mod sim;
pub mod stat;

pub use error::{Error, Result};
