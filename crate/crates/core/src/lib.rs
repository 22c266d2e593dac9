//! Variational solver and analysis toolkit for the coupled cubic elliptic
//! system -Delta u + lambda u = u^3 - beta u v^2 (and its counterpart in
//! v) on box domains with zero boundary values.
//!
//! Modules:
//! - [`grid`]: finite-difference discretization, quadrature, Poisson
//!   solves, Dirichlet eigenpairs;
//! - [`model`]: system parameters, truncated nonlinearities, energy,
//!   gradient and Hessian of the plain and truncated functionals;
//! - [`solver`]: minimax-seeded descent, Newton refinement, deflation,
//!   beta-continuation, linking probe;
//! - [`analysis`]: Morse index and inertia checks, Pohozaev and Nehari
//!   certificates, segregation metrics, nodal counting, diagonal checks.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{build_grid, Domain, EigenPair, Field, Grid};
pub use model::{FunctionalVariant, GradientMetric, StatePair, SystemParams};
pub use solver::{Branch, BranchDiagnostics, MinimaxSeed, SolveOptions};
