//! Numerical laboratory for the exact CLT error of sums of (d+1)-atom
//! random variables: exact laws, Edgeworth series of any order, the
//! resonance decomposition of the error term, unimodular lattices with
//! characters, and Monte Carlo ensembles of the limiting random variables.
//!
//! Layout follows the pipeline: [`atoms`] describes a distribution,
//! [`exactdist`] builds the law of `S_n`, [`edgeworth`] its smooth
//! approximations, [`resonance`] the oscillatory correction, [`lattice`]
//! and [`limitlaw`] the homogeneous-space limit objects, and
//! [`experiments`] the statistical harnesses that compare all of them.

pub mod atoms;
pub mod edgeworth;
pub mod error;
pub mod exactdist;
pub mod experiments;
pub mod io;
pub mod lattice;
pub mod limitlaw;
pub mod linalg;
pub mod phase;
pub mod quad;
pub mod resonance;
pub mod rng;

pub use atoms::AtomicDistribution;
pub use edgeworth::EdgeworthSeries;
pub use error::{Error, Result};
pub use exactdist::ExactLaw;
pub use experiments::EnsembleResult;
pub use lattice::{Character, UnimodularLattice};
pub use limitlaw::SeriesEvaluation;
pub use resonance::{ResonantTerm, StructureConstants};
