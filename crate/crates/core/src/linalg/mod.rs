//! Sparse storage, a band-limited direct solver and GMRES.
//!
//! Everything here is generic over [`Scalar`](crate::Scalar) so the same code
//! factors the real graph Laplacians and the complex saddle-point systems.

mod direct;
mod krylov;
mod sparse;

pub use direct::{reverse_cuthill_mckee, SparseLu};
pub use krylov::{gmres, GmresOutcome};
pub use sparse::{CsrMatrix, TripletBuilder};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("singular matrix: no admissible pivot in column {column} (pivot modulus {pivot:e})")]
    Singular { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("krylov solver did not converge in {iterations} iterations (last relative residual {last:e})")]
    NotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },
}
