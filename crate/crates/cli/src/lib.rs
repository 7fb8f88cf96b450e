//! Scenario runner and reproduction driver behind the `incompat` binary.

pub mod error;
pub mod reproduce;
pub mod run;
pub mod scenario;
