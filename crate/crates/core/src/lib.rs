//! Slotted-time simulator and control library for energy-aware cooperative
//! computation among a source and a group of nearby devices.
//!
//! A source pushes per-device flows over cellular/Wi-Fi links; devices help
//! each other over device-to-device links by receiving, processing, and
//! relaying packets for their neighbours. Every slot, four controllers run:
//!
//! * flow control — admits packets into the source queues by maximizing
//!   `M·g(y) − S·y` within a rate box,
//! * computation control — moves packets into the processing block by
//!   queue-differential max-weight,
//! * energy control — gates processed packets through a battery-driven
//!   credit filter,
//! * scheduling & cooperation — activates links by max-weight over the
//!   feasible activation sets of the interference model.
//!
//! [`engine`] composes the controllers into runs; [`oracle`] provides the
//! offline references (stability-region membership, brute-force utility
//! optimum, per-slot max-weight verification) that the controllers are
//! tested against.

pub mod channel;
pub mod control;
pub mod energy;
pub mod engine;
pub mod model;
pub mod oracle;

pub use channel::{ActivationSet, ChannelConfig, ChannelState, LinkId, NetworkMode};
pub use control::{ControllerConstants, UtilitySpec};
pub use energy::{BatteryModel, EnergyLedger};
pub use engine::{Policy, ScenarioConfig, Summary, TraceRecord};
pub use model::{DecisionVector, NodeId, QueueMatrix, SourceQueues, SystemState};
pub use oracle::{AverageModel, BoundParams};
