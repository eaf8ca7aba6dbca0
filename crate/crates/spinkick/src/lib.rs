//! Simulator for a harmonic oscillator kicked by stroboscopic spin
//! measurements.
//!
//! The oscillator is coupled to a spin-1/2 through a static linear magnetic
//! gradient; periodic projective measurements of the transverse spin split the
//! orbital state into a growing signed superposition of coherent states. This
//! crate evolves single quantum trajectories exactly (branch doubling per
//! step), computes closed-form ensemble statistics, evaluates Husimi
//! phase-space fields and Loschmidt echoes, and cross-validates everything
//! against an independent truncated number-basis propagator.
//!
//! All phase-space quantities are dimensionless: z = q' + ip' with
//! q' = q/(√2 b), p' = b p/(√2 ħ), energies in units of ħω0.
//!
//! The hot paths (Gram sums, grid evaluation, branch enumeration) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! sequential loops without it; results are bit-identical either way.

pub mod ensemble;
pub mod error;
pub mod fock;
pub mod grid;
pub mod maps;
pub mod params;
pub mod trajectory;

pub mod cli;

mod kahan;
mod par;

pub use error::{Error, Result};
pub use params::SystemParams;

/// Complex phase-space label / amplitude type used throughout.
pub type C64 = num_complex::Complex64;
