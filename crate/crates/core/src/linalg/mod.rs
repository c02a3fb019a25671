pub mod krylov;
pub mod multigrid;
pub mod sparse;
