//! Batch frontend: solve policies, run the mobility sweep and the
//! fixed-path robustness study, and summarize the resulting tables.

pub mod commands;
pub mod failure;
pub mod records;
pub mod report;
