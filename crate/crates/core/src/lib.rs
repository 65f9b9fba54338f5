//! QoE-driven composition of crowdsourced IoT energy services.
//!
//! A microcell's demand is split into time slots, each holding consumer
//! requests; providers register energy services for one or more slots. The
//! [`composition`] strategies allocate services to requests and
//! [`metrics`] scores the outcome by consumer satisfaction and fulfillment.

pub mod cli;
pub mod composition;
pub mod domain;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod workload;

pub use composition::{compose, StrategyConfig};
pub use domain::{
    CompositionResult, EnergyRequest, EnergyService, Grant, Instance, Mah, MicrocellDemand,
    Strategy, TimeSlot,
};
pub use metrics::{qoe, QoEReport};
