//! Dense complex eigenvalue problems and polynomial roots.
//!
//! Eigenvalues come from balancing, Householder reduction to Hessenberg form and
//! single-shift complex QR. Eigenvector frames add back substitution on the Schur
//! factor; left vectors are the rows of the inverse eigenvector matrix, so that the
//! frame is biorthonormal by construction.

mod dense;
mod matrix;
mod roots;

pub use dense::{eig_dense, eig_frame, eig_hessenberg, EigenFrame, NEAR_EP_CONDITION};
pub use matrix::{CMatrix, Lu};
pub use roots::{companion, poly_eval, poly_from_roots, poly_roots};
