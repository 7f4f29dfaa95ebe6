//! Integration, event location, finite differences and dense linear algebra.

pub mod linalg;
pub mod ode;
pub mod solve;

pub use linalg::{eigenvalues, numerical_rank, singular_values, Eigenvalue, Mat, RANK_TOL};
pub use ode::{integrate, integrate_to_event, DenseSegment, EventHit, IntegratorOptions, Watch};
pub use solve::{fd_jacobian, min_norm_newton, newton_solve, NewtonOptions, NewtonResult};
