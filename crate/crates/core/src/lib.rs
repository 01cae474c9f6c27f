//! Clock-based reductions from k-SAT and quantum circuits to local
//! Hamiltonians, exact spectral oracles for checking their promises at desk
//! scale, and a simulation of counting-based partition-function estimation.
//!
//! Qubit ids are 0-based and qubit 0 is the most significant bit of every
//! basis index.

pub mod circuit;
pub mod config;
pub mod clock;
pub mod cnf;
pub mod hamiltonian;
pub mod linalg;
pub mod qpf;
pub mod spectra;
