//! Simulation of N qubits rotating about z under independent dephasing whose
//! environments are continuously monitored by photo-detection or homodyne
//! detection, together with the Fisher-information machinery used to judge
//! those monitoring schemes for frequency estimation.
//!
//! Layout:
//! - [`operators`]: Pauli-z, collective spin and canonical probe states.
//! - [`dynamics`]: the unconditional dephasing master equation.
//! - [`trajectories`]: stochastic conditional dynamics and their closed forms.
//! - [`metrology`]: fidelity, QFI and Monte Carlo Fisher estimates.
//! - [`verify`]: self-checks that exercise the whole stack.
//!
//! Bit convention: qubit 1 is the most significant bit of a computational
//! basis index, so `|q_1 q_2 ... q_N>` has index `sum_j q_j 2^(N-j)`.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod metrology;
pub mod operators;
pub mod trajectories;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

pub type Matrix = nalgebra::DMatrix<C64>;
