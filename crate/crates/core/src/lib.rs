//! Memory-bounded exemplar selection for streaming classifiers.
//!
//! This crate maintains a fixed-size, class-balanced training set (the
//! exemplar store) over a weekly data stream. Each time new data arrives the
//! store is rebuilt, either by uniform random sampling or by a genetic
//! search over balanced fixed-cardinality subsets, and the online classifier
//! is retrained from the refreshed store whenever its prequential accuracy
//! drops by more than a configured forgetting threshold.
//!
//! Module map:
//! - [`dataset`]: labeled samples, CSV ingestion, stratified splits, and a
//!   synthetic drifting stream generator.
//! - [`classifier`]: the pluggable classifier contract plus two built-in
//!   learners (logistic regression, random forest).
//! - [`evaluation`]: accuracy / log-loss metrics, population fitness
//!   evaluation, and multi-run aggregation.
//! - [`ga`]: the genetic search over balanced subsets.
//! - [`memory`]: the bounded exemplar store and its update strategies.
//! - [`harness`]: the weekly prequential protocol and multi-run
//!   orchestration.
//! - [`reports`]: results/summary file formats.
//!
//! Every random decision is driven by a [`seeding`]-derived `ChaCha8Rng`
//! seed, so whole experiments are pure functions of their configuration.

pub mod classifier;
pub mod dataset;
pub mod evaluation;
pub mod ga;
pub mod harness;
pub mod memory;
pub mod reports;
pub mod seeding;
