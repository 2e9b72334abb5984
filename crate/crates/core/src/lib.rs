//! Discrete-event simulator for lifecycle-aware VNF placement in a tree of
//! edge clouds.

pub mod config;
pub mod engine;
pub mod error;
pub mod forecast;
pub mod lifecycle;
pub mod mobility;
pub mod output;
pub mod placement;
pub mod queueing;
pub mod radio;
pub mod rng;
pub mod topology;

pub use config::{RunConfig, Strategy};
pub use engine::{run, run_with, FailureCause, PacketOutcome, RunMetrics, SimOptions, Simulation, UserMetrics, World};
pub use error::{ConfigError, LifecycleError, PlacementError, SimError, TopologyError};
pub use forecast::DemandForecast;
pub use lifecycle::{footprint, InstanceRecord, LifecycleState, ResourceVector, TransitionTable};
pub use mobility::{MobilityTrace, UserState};
pub use output::{emit_outputs, Summary};
pub use topology::{NetworkModel, Point};
