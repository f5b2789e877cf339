//! Co-design toolkit for superconducting-qubit readout.
//!
//! The crate covers the whole path from a Josephson parametric amplifier
//! (JPA) cell to the room-temperature receiver:
//!
//! - [`circuit_model`]: lumped-element stamping of the coupled-Quarton JPA cell
//! - [`eigenmode`]: normal modes and effective LC parameters of the cell
//! - [`gain_profile`]: comb-like JPA gain spectra and compression
//! - [`dynamics`]: qubit–bus–qubit amplitudes, probe currents, Lindblad evolution
//! - [`spectral`]: FFT of probe currents and entanglement-line detection
//! - [`planner`]: qubit/resonator frequency placement on a gain profile
//! - [`rf_chain`]: receiver budgets and a behavioral down-conversion model
//! - [`cli_io`]: configuration documents, CSV/JSON output and subcommands

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit_model;
pub mod cli_io;
pub mod dynamics;
pub mod eigenmode;
pub mod error;
pub mod gain_profile;
pub mod planner;
pub mod rf_chain;
pub mod spectral;

mod csv_util;

pub use error::{Error, Result};
