//! Quantum state diffusion for a harmonic oscillator damped by a thermal bath.
//!
//! The crate integrates the diffusive stochastic Schrödinger equation whose
//! ensemble average is the Lindblad master equation with Lindblad operators
//! `sqrt((n̄+1)γ)·a` and `sqrt(n̄γ)·a†`, and carries a deterministic master
//! equation solver alongside it so every stochastic result can be checked
//! against an independent reference.
//!
//! Module map:
//!
//! * [`model`]: parameters, truncated Fock-basis operators, coherent states.
//! * [`qsd`]: noise increments, the Euler–Maruyama step and trajectory driver.
//! * [`observables`]: moments, the `P`/`Q`/`R` shape diagnostics and the
//!   analytic localization rate.
//! * [`ensemble`]: parallel trajectory ensembles, density-matrix recovery and
//!   the coherent-mixture fit.
//! * [`oracle`]: Lindblad propagation, thermal state, Ornstein–Uhlenbeck
//!   moment flow.
//! * [`histories`]: phase-space cell projectors and the decoherence functional.
//! * [`experiments`], [`config`], [`output`]: the experiment drivers behind the
//!   `qsd` binary.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod histories;
pub mod model;
pub mod nnls;
pub mod observables;
pub mod oracle;
pub mod output;
pub mod qsd;
pub mod stats;
pub mod thresholds;

pub use error::{Error, Result};
pub use model::{ModelParams, OperatorSet, StateVector};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Largest entry modulus of a complex matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
