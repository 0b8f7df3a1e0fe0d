//! Container dwell-time and service forecasting toolkit.

pub mod ontology;
pub mod time;
pub mod hsclass;
pub mod linkage;
pub mod synthworld;
pub mod featfactory;
pub mod pipeline;
pub mod labeling;
pub mod learners;
pub mod decision;
pub mod evaluation;
pub mod governance;
pub mod workflow;
pub mod cli;
#[cfg(test)]
mod testutil;
