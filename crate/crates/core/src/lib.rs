//! Trace-driven cluster simulator with forecast-driven resource shaping.

pub mod domain;
pub mod engine;
pub mod experiment;
pub mod forecast;
pub mod par;
pub mod report;
pub mod shaper;
pub mod stats;
pub mod workload;
