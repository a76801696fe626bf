//! Lindblad dynamics of an autonomous thermal machine that entangles two
//! resonators coupled to a common ancilla and a filtered hot bath.
//!
//! Everything numeric is generic over the real scalar; the aliases below fix
//! it to `f64` for ordinary use.

pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod generator;
pub mod master;
pub mod num;
pub mod operators;
pub mod rates;
pub mod scenario;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};

pub type QOperatorF64 = operators::QOperator<f64>;
pub type DensityStateF64 = operators::DensityState<f64>;
pub type LiouvillianF64 = master::Liouvillian<f64>;
pub type BathSpecF64 = spectral::BathSpec<f64>;
pub type BathSetF64 = master::BathSet<f64>;
pub type SystemParamsF64 = master::SystemParams<f64>;
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type RateSetF64 = rates::RateSet<f64>;
pub type PolaronMapF64 = entanglement::PolaronMap<f64>;
