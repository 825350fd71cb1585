//! Preliminary orbit determination from one topocentric position and one
//! attributable, using the conservation of the Keplerian integrals.
//!
//! The pipeline is: [`observations`] → [`polysystem`] (coefficients and the
//! degree-8 resultant) → [`rootfind`] → [`solver`] (back-substitution, filters)
//! → [`select`] (choice among candidates, covariance penalty). [`oracle`] holds
//! independent brute-force checks and [`harness`] the synthetic experiments.
//!
//! The algebraic modules are generic over [`Real`]; the aliases below fix them
//! at `f64`, which is what the pipeline uses.

pub mod error;
pub mod geom3;
pub mod harness;
pub mod kepler;
pub mod observations;
pub mod oracle;
pub mod poly;
pub mod polysystem;
pub mod rootfind;
pub mod scalar;
pub mod select;
pub mod solver;

pub use error::{Degeneracy, OdError, Result};
pub use scalar::Real;

pub type Vec3 = geom3::Vec3<f64>;
pub type Mat3 = geom3::Mat3<f64>;
pub type CartesianState = kepler::CartesianState<f64>;
pub type KeplerianElements = kepler::KeplerianElements<f64>;
pub type Problem = polysystem::Problem<f64>;
pub type CoefficientSet = polysystem::CoefficientSet<f64>;

pub use observations::ODInput;
pub use solver::{solve, CandidateSolution, SolverConfig};
