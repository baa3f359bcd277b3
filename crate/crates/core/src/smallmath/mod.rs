//! Shared numerical kernel: small dense linear algebra, jets, rank and
//! signature decisions, damped Newton solves, Laurent polynomials.

mod jet;
pub mod linalg;
mod newton;
mod poly;

pub use jet::{fd_jacobian, hessian, jacobian, jet_evaluate, FdPolicy, FdScheme, FnMap, Jet, SmoothMap, SmoothMapHandle};
pub use linalg::{
    adjugate, cokernel_basis, cos_to_subspace, det_gradient, determinant, full_svd, kernel_basis,
    numeric_rank, orthonormal_columns, pinv_solve, quadratic_signature, singular_values, FullSvd,
    RealMatrix, RealVector, DEFAULT_RANK_TOL,
};
pub use newton::{newton_solve, NewtonReport, MAX_HALVINGS};
pub use poly::{Poly, PolyMap};
