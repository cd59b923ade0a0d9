//! Very singular self-similar profiles of u_t = -(-Δ)^m u - t^α f(u).
//!
//! Profiles satisfy V^(2m) = (-1)^m [ a·yV' + bV - f(V) ] and decay with an
//! oscillatory stretched-exponential tail. The crate computes them by shooting,
//! follows them in p or α, and checks them against spectral asymptotics,
//! integral identities and direct PDE evolution.

pub mod banded;
pub mod blowup;
pub mod branch;
pub mod classify;
pub mod cli;
pub mod error;
pub mod io;
pub mod odesys;
pub mod params;
pub mod pdesim;
pub mod quad;
pub mod shoot;
pub mod spectral;

pub use error::{Error, Result};
pub use params::{DerivedExponents, Parity, ProblemParams, Variant};
