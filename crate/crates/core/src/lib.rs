//! Demand-responsive train formation, timetabling and holding control for a
//! single-direction urban rail line fed by a transfer hub.

pub mod config;
pub mod demand;
pub mod error;
pub mod ga;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod report;
pub mod simulator;
pub mod stage1;
pub mod stage2;
pub mod validate;

pub use error::{Error, Result};
