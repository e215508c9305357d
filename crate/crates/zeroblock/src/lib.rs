//! Discrete-event simulator and analytics for a timestamp-free
//! block-withholding countermeasure built on dummy placeholder blocks and a
//! network-wide maximum-acceptable-time schedule.

pub mod analytics;
pub mod chain;
pub mod chainfile;
pub mod churn;
pub mod miner;
pub mod mining;
pub mod scenario;
pub mod simnet;
