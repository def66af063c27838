//! Batched contextual bandits with a shared single-index structure.
//!
//! The policy bins the projected covariate `x·β` into a hierarchy of
//! intervals, runs successive arm elimination inside each bin at batch
//! boundaries and refines bins that still hold several arms. The direction `β`
//! is either supplied or estimated from an initial phase with SADE.

pub mod baseline;
pub mod envs;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod phased;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod sir;

pub use error::{Error, Result};
