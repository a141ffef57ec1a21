//! Sampling recovery in reproducing kernel Hilbert spaces.
//!
//! Spectral models ([`spectrum`]), the Christoffel-type sampling density
//! ([`density`]), weighted least squares ([`leastsq`]), random frame
//! certification ([`concentration`]), deterministic frame subsampling
//! ([`weaver`]) and end-to-end worst-case error experiments ([`pipeline`]).

pub mod concentration;
pub mod density;
pub mod error;
pub mod io;
pub mod leastsq;
pub mod linalg;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod spectrum;
pub mod weaver;

pub use error::{Error, Result};
