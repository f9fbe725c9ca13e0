//! Simulation and spectral analysis of a spin-1/2 whose off-diagonal
//! coupling is driven by a classical Ornstein–Uhlenbeck process.
//!
//! The propagator `U_t ∈ SU(2)` solves `i dU = (σ3/2 + κ Z_t σ1) U dt` with
//! `dZ = -γZ dt + σ dW`. The crate provides exact noise sampling, a
//! structure-preserving integrator, the averaged one-dimensional diffusion for
//! `y = 2ρ - 1`, a Galerkin discretization of the Markov generator,
//! first-passage estimators and an experiment harness.

pub mod averaging;
pub mod dynamics;
pub mod error;
pub mod fpt;
pub mod harness;
pub mod noise;
pub mod spectral;
pub mod stats;
pub mod su2;

pub use error::{Error, Result};
