//! Mean-field dynamics of driven, dissipative lattices of two-level units.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the numerical kernel:
//!
//! * [`model`]: state, parameters, coupling topologies, vector field and Jacobian.
//! * [`integrate`]: fixed-step RK4 and adaptive Dormand–Prince stepping of the
//!   state and of tangent-vector bundles.
//! * [`lyapunov`]: Gram–Schmidt orthonormalization, Lyapunov spectra and regime
//!   classification.
//! * [`analysis`]: local maxima, parameter sweeps, regime maps, scaling and
//!   control studies, and the single-unit analytic steady state.
//!
//! Time is measured in units of the decay rate, so `gamma = 1` everywhere.
#![no_std]
#![deny(rust_2018_idioms)]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod integrate;
pub mod lyapunov;
mod math;
pub mod model;

pub use error::{Error, Result};
pub use integrate::{IntegratorConfig, Method, TangentBundle};
pub use lyapunov::{Classification, LyapunovConfig, LyapunovResult, Regime};
pub use model::{
    ChainState, CouplingGraph, CouplingTopology, DriveSpec, MeanFieldModel, ModelParams,
};
