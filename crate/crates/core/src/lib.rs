//! Multi-group agnostic PAC learning on finite domains.
//!
//! The crate learns a single predictor whose loss on every subgroup in a
//! collection is competitive with the best hypothesis of a finite class for
//! that subgroup. Learning is reduced to outcome indistinguishability (OI):
//! an OI predictor against a family of loss-comparing distinguishers is
//! post-processed by the pointwise transform of an f-proper loss.
//!
//! Modules:
//! - [`model`]: finite distributions, groups, predictors, samples, seeded RNG.
//! - [`losses`]: loss functions, unambiguity checks, f-proper transforms,
//!   uniform-convergence sample bounds.
//! - [`oi`]: distinguishers, Monte Carlo OI audits and an OI learner.
//! - [`multigroup`]: the end-to-end multi-group learner and an empirical
//!   uniform-convergence tester.
//! - [`oracle`]: exact best-in-class values and brute-force feasibility search.
//! - [`instances`]: counterexample constructions, random instances, file IO.
//! - [`cli`]: the experiment runner behind the `multipac` binary.

pub mod cli;
pub mod instances;
pub mod losses;
pub mod model;
pub mod multigroup;
pub mod oi;
pub mod oracle;
