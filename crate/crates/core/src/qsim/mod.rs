//! Pure-state simulator for the gate set {RX, RY, RZ, CZ, CX}.
//!
//! Conventions:
//! - `R_P(θ) = exp(−iθP/2)` for `P ∈ {X, Y, Z}`.
//! - Qubit 0 is the most significant bit of the computational-basis index,
//!   so `|q0 q1 … q_{n−1}⟩` maps to index `Σ q_k 2^{n−1−k}`.
//!
//! [`density`] holds a dense density-matrix reference used to cross-check the
//! statevector path; nothing on the runtime path depends on it.

pub mod density;
mod gate;
mod state;

pub use density::{partial_trace, DensityMatrix};
pub use gate::{apply_gate, apply_gate_bound, GateKind, GateOp, Qubits};
pub use state::{expectation_weighted_z, StateVector, Unitary4};
pub(crate) use state::weighted_z_unchecked;
