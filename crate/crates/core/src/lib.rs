//! Numerical toolkit for distributed binary hypothesis testing against
//! independence with one sensor broadcasting to two decision centers.
//!
//! The sensor observes `Y0` and talks to the centers over a common link and
//! two individual links; center `i` observes `Yi` and must detect whether the
//! sources are correlated (null) or independent (alternative). This crate
//! computes the achievable type-II error-exponent pairs `(theta1, theta2)`
//! for such systems:
//!
//! - [`prob`] — exact finite-alphabet probability arithmetic (pmfs,
//!   marginals, entropies, mutual informations).
//! - [`optimizer`] — the constrained mutual-information maximizations that
//!   parameterize every exponent region, solved by projected gradient ascent
//!   over channel simplices with multistart.
//! - [`regions`] — Pareto frontiers of the exponent regions under maximum-
//!   and expected-rate constraints, with achieving witnesses.
//! - [`oracle`] — independent brute-force verification of the optimizer on
//!   small alphabets by exhaustive grid enumeration.
//! - [`sim`] — Monte Carlo simulation of the rate-sharing coding scheme
//!   (partition flags, quantize-and-test codebooks, per-receiver decisions).
//! - [`instances`] — the canonical problem instances shipped with the tool.

// Numeric kernels index several parallel tables at once; plain index loops
// stay readable there.
#![allow(clippy::needless_range_loop)]

pub mod base;
pub mod instances;
pub mod optimizer;
pub mod oracle;
pub mod prob;
pub mod regions;
pub mod sim;

pub use base::LogBase;
pub use prob::{ConditionalPmf, Joint2, Joint3, JointSourcePmf, Pmf, ProbError};
