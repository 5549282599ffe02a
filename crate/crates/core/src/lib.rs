//! Simulation and analysis of magnetic-gradient decoherence for singlet-triplet
//! spin pairs in Si/SiGe double quantum dots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod crystal;
pub mod error;
pub mod filter;
pub mod fit;
pub mod hyperfine;
pub mod quadrature;
pub mod quadrupole;
pub mod rng;
pub mod spectroscopy;
pub mod wavefunction;

pub use error::{Error, Result};
