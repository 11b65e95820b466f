//! Numerical laboratory for Fisher-KPP fronts in the Bramson regime.
//!
//! The crate solves the minimal-speed traveling wave, evolves the equation in
//! the lab and logarithmically corrected moving frames, works in self-similar
//! variables to estimate the asymptotic amplitude, certifies explicit
//! barriers, and simulates branching Brownian motion as a probabilistic
//! cross-check.

pub mod error;
pub mod numerics;
pub mod parabolic;
pub mod wave_profile;
pub mod kpp_solver;
pub mod self_similar;
pub mod barriers;
pub mod bbm;

pub use error::{Error, Result};
