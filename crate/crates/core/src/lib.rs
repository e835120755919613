//! Actionable guidance for files a defect model flags as risky.
//!
//! The pipeline trains a random forest on one release, builds a synthetic
//! neighbourhood around each file of the next release, mines k-optimal rules
//! from it, and turns those rules into do/avoid statements.

pub mod dataset;
pub mod evaluation;
pub mod forest;
pub mod guidance;
pub mod metrics;
pub mod miner;
pub mod neighborhood;
pub mod pipeline;
pub mod report;
pub mod synthesis;

pub use dataset::{Dataset, Instance, Label, MetricSchema};
pub use forest::ForestModel;
pub use guidance::{GuidancePlan, GuidanceType};
pub use miner::{Condition, MinerConfig, Objective, Rule, RuleSet};
