//! Discrete-event simulator for TCP segment caching on lossy multi-hop
//! wireless chains.
//!
//! Intermediate relays keep one TCP data segment each and retransmit it
//! locally when a loss is detected, so the end-to-end sender rarely has to.
//! The crate runs single transfers ([`harness::run`]), seeded sweeps
//! ([`harness::sweep`]) and aggregates their metrics.

pub mod cli;
pub mod harness;
pub mod link;
pub mod network;
pub mod node;
pub mod packet;
pub mod sim;
pub mod tcp;

pub use harness::{
    aggregate, aggregate_all, reduction_factor, run, sweep, Aggregate, RunMetrics, RunRow, Scenario, ScenarioKey,
};
pub use network::run_traced;
pub use sim::SimTime;
