//! Privacy-preserving hyperdimensional classification over CKKS.

pub mod bench;
pub mod ckks;
pub mod dataset;
pub mod hdc;
pub mod pipeline;
pub mod protocol;
pub mod ring;
