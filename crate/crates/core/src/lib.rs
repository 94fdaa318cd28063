//! Continuum percolation geometry and homogenization experiments.
//!
//! The crate builds Boolean-model clusters from random point configurations,
//! approximates them by site percolation on a fine lattice, solves discrete
//! corrector problems to obtain harmonic coordinates and an effective
//! covariance matrix, and simulates reflecting diffusions whose diffusive
//! rescaling is compared against that matrix.
//!
//! Module map:
//! - [`config`]: point configurations, samplers, shifts, file I/O
//! - [`cluster`]: union-of-balls connectivity, membership, reflection geometry
//! - [`lattice`]: the δ-approximating site model, crossing events, geometric scans
//! - [`field`]: stationary coefficient fields
//! - [`corrector`]: discrete Dirichlet forms, harmonic-coordinate solves, effective matrix
//! - [`diffusion`]: reflected Euler and conductance-walk path simulation
//! - [`qip`]: diffusive-scaling experiments and statistics
//! - [`benchmarks`]: the shipped test geometries

pub mod benchmarks;
pub mod cluster;
pub mod config;
pub mod corrector;
pub mod diffusion;
pub mod error;
pub mod field;
pub mod lattice;
pub mod linalg;
pub mod qip;
pub mod stats;

pub use error::{Error, Result};
