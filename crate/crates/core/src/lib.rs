//! Q-valued functions in the plane.
//!
//! The crate is organised around the metric space A_Q(R^n) of unordered
//! Q-tuples ([`qpoint`]), and builds on it:
//!
//! * [`selection`]: squad splitting, 1-d selections and the irreducible
//!   decomposition of circle-valued paths;
//! * [`embedding`]: the sorted-projection embeddings and the projection back;
//! * [`extension`]: Lipschitz extension on grids and annulus interpolation;
//! * [`dirichlet`]: meshes, the lifted Dirichlet energy and its minimizer;
//! * [`analysis`]: frequency function, blow-ups, tangent maps and singular
//!   points of solved functions;
//! * [`io`]: the versioned JSON documents read and written by the CLI.

pub mod error;
pub mod qpoint;
pub mod selection;
pub mod embedding;
pub mod extension;
pub mod dirichlet;
pub mod analysis;
pub mod io;

pub use error::{Error, Result};
pub use qpoint::{metric_g, Matching, QPoint};
