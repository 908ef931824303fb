//! Bias-corrected singular subspace estimation (HeteroPCA) for low-rank
//! matrices observed under heteroskedastic, row-dependent noise, with
//! entrywise inference tools and a seeded Monte Carlo harness.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod matlin;
pub mod mcharness;
pub mod synthgen;

pub use error::{Error, Result};
