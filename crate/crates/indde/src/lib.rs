//! IO, file formats, simulator and command-line surface for the detector in
//! [`indde_core`].

pub mod cli;
pub mod csvio;
pub mod scenario;
pub mod simnet;
pub mod synth;
pub mod textfmt;

pub use indde_core;
