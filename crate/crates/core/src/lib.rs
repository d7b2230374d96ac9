//! Identifiability analysis for linear structural causal models.
//!
//! A linear SCM over a mixed graph `G = (V, D, B)` maps edge coefficients `Λ`
//! and error covariances `Ω` to the observed covariance
//! `Σ = (I − Λ)^{-T} Ω (I − Λ)^{-1}`. This crate builds the polynomial systems
//! whose real solutions are the fibers of that map, solves them with a
//! verified interval branch-and-prune solver, decides numerical, generic and
//! edge identifiability on top of the solver, compiles quadratic constraint
//! systems into SCM instances whose fiber size equals the solution count, and
//! exports the quantified real-arithmetic sentences for external tools.

pub mod formula;
pub mod graph;
pub mod identify;
pub mod matrix;
pub mod poly;
pub mod quad;
pub mod rational;
pub mod reduction;
pub mod scm;
pub mod solver;

pub use graph::{MissingPairList, MixedGraph};
pub use matrix::{Matrix, NumberMode, Scalar};
pub use rational::Rational;
