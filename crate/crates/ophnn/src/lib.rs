//! Continuous-time port-Hamiltonian neural network identification.
//!
//! The crate learns state-space models of the form
//!
//! ```text
//! ẋ = (J(x) − R(x)) ∂H/∂x + G(x) u,      y = G(x)ᵀ ∂H/∂x
//! ```
//!
//! from sampled input/output data. `J` is skew-symmetric, `R` positive
//! semidefinite and `H` bounded from below — all by construction, so every
//! trained model is cyclo-passive. The estimator minimizes a truncated
//! simulation-error loss over overlapping data subsections, with a learned
//! encoder supplying each subsection's initial state from a window of past
//! inputs and outputs.
//!
//! Module map:
//! - [`autodiff`] — reverse-mode engine over dense `f64` tensors
//! - [`nn`] — feedforward networks and analytic input gradients
//! - [`phcore`] — the structured model class (J, R, G, H)
//! - [`integrator`] — explicit single-step schemes (Euler, RK4), rollouts,
//!   empirical convergence-order estimation
//! - [`encoder`] — initial-state encoder and window indexing
//! - [`training`] — subsection loss, Adam, normalization, checkpoints
//! - [`datagen`] — multisine excitation, the cubic-spring two-mass
//!   benchmark simulator, noise injection, splits
//! - [`eval`] — NRMS metrics, full-record simulation, multi-rate grids
//! - [`cli`] — config-driven experiment commands used by the `ophnn` binary
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `cargo run --release --example train_smoke`.

pub mod autodiff;
pub mod cli;
pub mod datagen;
pub mod encoder;
mod error;
pub mod eval;
pub mod integrator;
pub mod nn;
pub mod phcore;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
