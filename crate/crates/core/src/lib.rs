//! Quantum circuit Born machines (QCBMs) trained against a GHZ target, and the
//! tooling used to characterize their loss landscapes.
//!
//! The crate is layered bottom-up:
//!
//! - [`simulator`]: dense statevector simulation and shot sampling.
//! - [`ansatz`]: the layered rotation/CNOT circuit family.
//! - [`objective`]: GHZ target, kernel MMD loss, parameter-shift gradients.
//! - [`trainer`]: Adam training runs and seeded ensembles.
//! - [`minima`]: mean-shift clustering of trained parameters and t-interval down-selection.
//! - [`landscape`]: straight-line barrier scans and 2-D plane loss grids.
//! - [`neb`]: nudged elastic band search for low-loss paths between minima.

pub mod ansatz;
pub mod error;
pub mod landscape;
pub mod minima;
pub mod neb;
pub mod objective;
pub mod rng;
pub mod simulator;
pub mod trainer;

pub use ansatz::{CircuitSpec, Layout, Parameterization};
pub use error::{Error, Result};
pub use objective::{KernelMatrix, KernelSpec, LossFunction, QcbmObjective, TargetDist};
pub use rng::SimRng;
pub use simulator::{Axis, DistKind, ProbDist, Shots, StateVector};
