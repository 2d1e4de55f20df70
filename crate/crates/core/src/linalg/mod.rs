//! Dense linear algebra used by the spectral engine.

pub mod assignment;
pub mod eigen;

pub use assignment::{partial_matching, solve_assignment};
pub use eigen::{sym_eigendecomp, sym_eigendecomp_with, EigenMethod, SymmetricEigen};
