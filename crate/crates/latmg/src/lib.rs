//! Periodic microstructure homogenization on voxel lattices.
//!
//! The crate solves the periodic cell problems of homogenization (linear
//! elasticity and steady heat conduction) with a matrix-free
//! element-by-element geometric multigrid solver, extracts effective
//! tensors, and runs SIMP inverse design on top of the same pipeline.
//!
//! Module map:
//! - [`voxgeom`]: periodic voxel grids, generators, occupancy features, file I/O
//! - [`hierarchy`]: sparse active-set grid hierarchy with parent/child maps
//! - [`fem`]: element kernels, matrix-free operator application, Galerkin coarsening
//! - [`field`]: multi-mode nodal arrays shared by the solver stack
//! - [`transfer`]: trilinear prolongation/restriction stencils
//! - [`smooth`]: Jacobi, 8-color Gauss-Seidel, SOR, CG, PCG smoothers
//! - [`cycles`]: V/W/F/Half-V/FMG schedules, warm-start injection, solve driver
//! - [`homog`]: cell-problem loads, effective tensors, derived moduli, metrics
//! - [`simp`]: density interpolation, sensitivities, OC updates, inverse design
//! - [`neuroprims`]: periodic rotary phase math, Morton views, pooling stencils
//!
//! All floating-point reductions run in a fixed per-output order, so results
//! are bitwise identical whether the `parallel` feature is enabled or not.

pub mod cycles;
pub mod error;
pub mod fem;
pub mod field;
pub mod hierarchy;
pub mod homog;
pub mod neuroprims;
pub mod parallel;
pub mod simp;
pub mod smooth;
pub mod transfer;
pub mod voxgeom;

pub use error::{Error, Result};
pub use field::Field;
