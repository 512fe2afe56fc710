//! Principal eigenvalues and eigenfunctions of fully nonlinear, uniformly
//! elliptic operators (Pucci extremal, linear, Bellman, finite Isaacs) with
//! Robin/Neumann boundary conditions.
//!
//! The pipeline is:
//!
//! * [`geometry`] builds a uniform grid with normals and a distance field;
//! * [`operators`] describes `F(x, r, p, X)` and the boundary law `B`;
//! * [`discretize`] turns them into a monotone finite-difference scheme and
//!   certifies discrete sub/supersolutions;
//! * [`solve`] runs the shifted monotone iteration for `F[u] = λu + g`;
//! * [`eigen`] brackets `λ̄` and `λ_under` by feasibility probes and builds
//!   the principal eigenfunctions;
//! * [`oracle`] is an independent dense reference for linear operators;
//! * [`cli`] reads JSON configs and writes CSV/JSON outputs.

pub mod cli;
pub mod discretize;
pub mod eigen;
pub mod error;
pub mod geometry;
mod linalg;
pub mod operators;
pub mod oracle;
pub mod solve;

pub use discretize::{DiscreteProblem, GridFunction};
pub use eigen::{EigenConfig, EigenEstimate};
pub use error::{Error, Result};
pub use geometry::{DomainGeometry, Grid};
pub use operators::{BoundaryLaw, EllipticityBounds, OperatorSpec};
pub use solve::{SolveConfig, SolveReport, SolveStatus};
