//! Unfitted isoparametric finite element solver for convection-diffusion
//! equations on moving, level-set-described 2D domains.
//!
//! The discretization combines a fixed background triangulation with
//! per-time-level element classification, an isoparametric mesh deformation
//! for higher-order geometry, cut-cell quadrature with guaranteed positive
//! weights, a direct ghost-penalty stabilization that implicitly extends the
//! solution into a strip around the domain, BDF time stepping, and a
//! shifted-evaluation projection to transfer fields between the slightly
//! different deformed meshes of consecutive time levels.

pub mod assembly;
pub mod cutquad;
pub mod error;
pub mod fespace;
pub mod harness;
pub mod isoparam;
pub mod levelset;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod stepper;
pub mod transfer;
pub mod vtk;

pub use error::{Error, Result};
pub use fespace::{FEField, LagrangeBasis, ScalarSpace};
pub use isoparam::{DeformationParams, ElemRole, MeshDeformation};
pub use levelset::{ActiveSetOpts, ActiveSlice, ElemClass, LevelSetSlice};
pub use mesh::{BackgroundMesh, MeshEntity, MeshPattern};
pub use quadrature::QuadratureRule;
