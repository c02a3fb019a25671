//! P1 finite elements for `L_eps` and `L_0` on polygonal domains.

pub mod assemble;
pub mod function;
pub mod identities;
pub mod lambda0;
pub mod norms;
pub mod quadrature;
pub mod recovery;
pub mod solve;

pub use assemble::{
    assemble, assemble_load, assemble_matrix, check_resolution, AssembledSystem, BcKind, BoundaryData, Coefficients,
    Load, ProblemData,
};
pub use function::FemFunction;
pub use lambda0::{estimate_lambda0, Lambda0Report};
pub use norms::{h1_seminorm, integrate, measure, norm, NormKind, Region, Side, Weight};
pub use recovery::{second_derivative_seminorm, SeminormReport};
pub use solve::{relative_residual, solve, Preconditioner, SolveOptions};
