//! Numerical building blocks for gluing singly periodic minimal surfaces:
//! KMR examples, Scherk-type and catenoidal end models, their Jacobi/Lamé
//! spectral theory, and the Cauchy-data matching systems that join them.

pub mod coords;
pub mod error;
pub mod gluing;
pub mod harmonic;
pub mod jacobi;
pub mod kmr;
pub mod model_graphs;
pub mod specfun;

pub use error::{Error, Result};
