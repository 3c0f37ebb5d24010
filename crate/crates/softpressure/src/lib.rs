//! Slotted-time queueing-network simulator and signal controllers.
//!
//! The crate models a directed network of scheduling agents, one per node,
//! each constrained to serve one set of non-conflicting incoming links (a
//! phase) at a time. Three decentralized policies are provided:
//!
//! * **Schedule-driven control** ([`sdc`]): forward-recursion DP over
//!   cluster sequences, minimizing cumulative delay in a rolling horizon.
//! * **Backpressure** ([`bp`]): max-weight phase activation with minimum
//!   green and fixed green extensions.
//! * **Softpressure** ([`sp`]): the hybrid — queue lengths (local or
//!   coordinated through neighbor messages) become softmax weights that bias
//!   the schedule-driven DP toward stabilizing long queues.
//!
//! The [`engine`] runs the slotted simulation, [`metrics`] computes delay
//! statistics, the stability estimate and its theoretical bound, and
//! [`scenario`] / [`compare`] handle the scenario file format and the
//! controller comparison experiments.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod bp;
pub mod compare;
pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod sdc;
pub mod sp;
pub mod topology;
pub mod traffic;

/// Discrete simulation time: one slot is one simulated second.
pub type Slot = u64;
