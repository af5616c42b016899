//! Sampled-data modeling of the series resonant converter (SRC).
//!
//! The crate builds the exact one-period discrete map of a full-bridge SRC
//! with a capacitive output filter, solves its cyclic steady state, derives
//! the small-signal audiosusceptibility model (input ripple to output
//! ripple) and checks it against a switched time-domain simulator.
//!
//! Module map:
//!
//! - [`params`]: component values, derived quantities, output-filter helper functions
//! - [`discretization`]: closed-form propagation per switch configuration and the period map
//! - [`steady_state`]: Newton solution of the periodic operating point
//! - [`small_signal`]: linearized model, z-domain transfer function, AS resonance
//! - [`time_sim`]: switched simulator with input-ripple injection and DFT gain extraction
//! - [`analysis`]: F/Qe sweeps, resonance error and the unity-gain design region
//! - [`config`] and [`output`]: configuration parsing and CSV/JSON emission for the CLI
//!
//! State vectors are always ordered `[iL, vc, vo]`; all quantities are SI.

// negated comparisons are used so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod discretization;
pub mod error;
pub mod output;
pub mod params;
pub mod small_signal;
pub mod steady_state;
pub mod time_sim;

pub use error::{Error, Result};
pub use params::{
    derive_params, ConverterParams, DerivedParams, DesignSpec, StateVector, SubintervalTimes,
};
