//! Simultaneous testing of sparse normal means with one-group global-local
//! shrinkage priors.
//!
//! The crate covers the prior families, the posterior shrinkage engine, the
//! two-groups Bayes Oracle and Benjamini–Hochberg baselines, grid-based full
//! Bayes marginalization over `(τ, σ)`, the induced decision rules, a seeded
//! Monte Carlo harness, and numerical certification of the error-probability
//! bounds these rules satisfy.

pub mod bounds;
pub mod error;
pub mod full_bayes;
pub mod oracle;
pub mod posterior;
pub mod priors;
pub mod quadrature;
pub mod rules;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use priors::{make_prior, Family, FamilyTag, Preset, PriorConfig, ShrinkagePriorSpec};
pub use quadrature::QuadratureSettings;
