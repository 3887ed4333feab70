//! Training-data subset search with ensemble active learning.
//!
//! A labeled pool is scored with ensemble uncertainty ([`acquisition`]),
//! subsets are chosen under one of several search schemes ([`subset`]), and
//! small from-scratch classifiers ([`learner`]) measure how well a subset
//! trains. [`analysis`] and [`experiment`] hold the diagnostics and the
//! seeded experiment plumbing used by the `subsetsearch` binary.

pub mod acquisition;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod kv;
pub mod learner;
pub mod pool;
pub mod seed;
pub mod subset;

pub use error::{Error, Result};
pub use pool::{LabeledPool, SampleId};
