//! Spontaneous emission of a single two-level emitter into finite
//! tight-binding photonic lattices, and detection of qubit-photon bound
//! states pinned to lattice corners.

pub mod analysis;
pub mod chainmap;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod experiment;
pub mod lattice;
pub mod polaron;
pub mod sparse;
