//! Finite-population engine for independent random matching.
//!
//! The crate has three legs that check each other:
//! - samplers and the period dynamics ([`sampler`], [`dynamics`]),
//! - an exact enumeration oracle in rational arithmetic ([`oracle`]),
//! - the large-population analytic limit ([`analytic`]) and a statistical
//!   verification harness ([`stats`]).
//!
//! Core distribution types are generic over a [`scalar::Scalar`]; the
//! aliases below fix them to `f64` for simulation work. Instantiate with
//! `num_rational::Ratio<BigInt>` where exactness is wanted.

pub mod analytic;
pub mod config;
pub mod dynamics;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod stats;

pub use model::{Matching, MatchedTypeOutcome, PeriodTrace, Population, TypeSpace};

/// `f64` instantiations of the scalar-generic core types.
pub type TypeDistribution = model::TypeDistributionOf<f64>;
pub type MutationMatrix = model::MutationMatrixOf<f64>;
pub type NoMatchVector = model::NoMatchVectorOf<f64>;
pub type MatchChangeKernel = model::MatchChangeKernelOf<f64>;
pub type ModelParams = model::ModelParamsOf<f64>;
pub type MatchLaw = analytic::MatchLawOf<f64>;
pub type PeriodTransition = analytic::PeriodTransitionOf<f64>;
