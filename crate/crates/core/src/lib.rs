//! Solvers for the concentration-dependent diffusion equation
//! dc/dt = div(D(c) grad c) on uniform 3D grids.
//!
//! The central objects are a time-Taylor series built through the integrated
//! diffusivity F(c) (one Laplacian per order), a free-space Poisson solver
//! used to reconstruct F from dc/dt, a suite of exact-identity residuals for
//! cross-checking trajectories, and an explicit finite-difference reference
//! solver with analytic benchmark solutions.

// Parameter guards are written `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusivity;
pub mod error;
pub mod grid;
pub mod identities;
pub mod io;
pub mod poisson;
pub mod reference;
pub mod taylor;

pub use diffusivity::DiffusivityModel;
pub use error::{Error, Result};
pub use grid::{Boundary, FaceAverage, Grid3, ScalarField3, VectorField3};
pub use identities::{EquationId, ResidualReport, Trajectory, TrajectorySource};
pub use poisson::{PoissonMethod, PoissonSolution};
pub use reference::{AnalyticSolution, CompareTarget, ErrorRow, Scheme, SolverConfig};
pub use taylor::TaylorState;
