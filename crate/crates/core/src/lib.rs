//! Thermal and stationary states of quadratic fermion systems.
//!
//! This crate builds the grand-canonical state of a number-conserving
//! quadratic fermion Hamiltonian as a canonical matrix-product state over an
//! auxiliary "second space" of Majorana operator strings, constructs the
//! second-space Liouvillian of linear (one-body) baths, solves for
//! non-equilibrium stationary states, and compares the two through vector
//! overlaps.

pub mod canonical;
pub mod dense;
pub mod error;
pub mod liouville;
pub mod model;
pub mod mps;
pub mod stationary;
pub mod thermo;

pub use canonical::{CanonicalFactorization, Direction, GivensSchedule};
pub use error::Error;
pub use liouville::{NessKernel, NessRoute, StructureMatrix, SuperOperator};
pub use model::{
    ArgumentMatrices, BathSet, BlockPartition, CoefficientMatrix, GrandPartition,
    SingleBodySpectrum, ThermoParams,
};
pub use mps::{CanonicalMps, MpsOptions, TwoSiteGate};
pub use stationary::{
    Branch, StationarityReport, Theorem1Config, Theorem2Block, Theorem2Config, ThermalMatch,
};
pub use thermo::ThermoState;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
