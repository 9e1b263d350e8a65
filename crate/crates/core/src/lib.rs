//! Conic geometry numerics: cone projections, statistical dimension and
//! Gaussian width estimators, intersection detection, conic solvers, and a
//! seeded Monte Carlo harness for phase-transition experiments on Gaussian
//! random projections of convex cones.

pub mod cone;
pub mod error;
pub mod intersect;
pub mod linalg;
pub mod phase;
pub mod rng;
pub mod solver;
pub mod stats;

pub use cone::{ConeSpec, ConvexSetOracle};
pub use error::{ConeError, Result};
pub use rng::{derive_stream, RngStream, RNG_ALGORITHM};
pub use solver::SolverOptions;
