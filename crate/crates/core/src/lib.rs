//! Differentially private submodular and k-submodular maximization under matroid constraints.

pub mod contgreedy;
pub mod covering;
pub mod error;
pub mod harness;
pub mod ksub;
pub mod matroid;
pub mod mech;
pub mod multilinear;
pub mod rounding;
pub mod setfn;

pub use error::{Error, Result};
pub use matroid::Matroid;
pub use setfn::{ElementSet, GroundSet, SetFunction, SetOracle};
