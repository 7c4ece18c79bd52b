//! Distributionally robust prediction and prescription for data generated by
//! an unknown finite-state Markov chain.
//!
//! The ambiguity set is a conditional-relative-entropy ball around the
//! empirical doublet distribution. Worst-case expected losses are computed
//! by a Frank-Wolfe loop over transition matrices whose linear subproblem is
//! solved through a low-dimensional dual. Around that core sit a
//! derivative-free prescriptor, a two-chain hypothesis test, comparison
//! baselines and a synthetic experiment harness.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod hypotest;
pub mod io;
pub mod markov;
pub mod oracle;
pub mod prescriptor;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
