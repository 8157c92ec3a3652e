//! Universal scaling asymptotics of quantized linear Hamiltonian flows,
//! with an exact truncated Bargmann–Fock model to check them against.
//!
//! Modules, bottom up:
//! - [`symplectic`]: polar decomposition, ω₀, ψ₂, 𝒮_A, ν and the matrix
//!   identities behind the leading kernel term.
//! - [`asymptotics`]: closed-form predictions (leading kernel, decay
//!   envelope, unitarization modulus, diagonal composition, fixed-point
//!   trace).
//! - [`fock`]: the finite model (basis, quadrature, pulled-back flow
//!   operators, Toeplitz operators, traces, unitarity).
//! - [`stationary`]: the phase Ψ, its Hessian path and the Gaussian
//!   reductions as executable checks.
//! - [`harness`]: scenarios, sweeps, slope fits, CSV/SVG output.

// Input checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod fock;
pub mod harness;
pub mod linalg;
pub mod quadrature;
pub mod stationary;
pub mod symplectic;

pub use asymptotics::{LeadingKernelPrediction, SymbolValue};
pub use error::{Error, Result};
pub use fock::{KernelSample, ModelSpace, QuadraticFlow, TruncatedOperator};
pub use harness::{Scenario, SweepRecord};
pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
pub use stationary::PhasePoint;
pub use symplectic::{GraphSplitting, PolarFactors, SymplecticMatrix};
