//! Deterministic discrete-event model of a network-processor forwarding
//! pipeline: seeded multi-class traffic, flow classification with a cached
//! fast path, per-port egress queues under selectable queue-management
//! policies (drop-tail, random early detection, and a priority-overflow
//! scheme that redirects or defers instead of dropping), strict-priority
//! transmission, and event-sourced metrics with replayable logs.

pub mod aqm;
pub mod capsule;
pub mod classifier;
pub mod events;
pub mod metrics;
pub mod packet;
pub mod ring;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod time;
pub mod traffic;

/// Egress (transmit) port count of the modeled device.
pub const EGRESS_PORTS: usize = 5;
/// Ingress (receive) port count.
pub const INGRESS_PORTS: usize = 2;
