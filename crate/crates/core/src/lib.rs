//! Deterministic discrete-event simulator for cloud task scheduling.
//!
//! Cloudlets (units of user work) are submitted to a broker, dispatched onto
//! virtual machines by one of four policies (FCFS, SJF, Priority, and a hybrid
//! SJF + Priority rule with aging), and each dispatch binds a virtual
//! blockchain lease for the lifetime of the task.
//!
//! All simulation time is integer milliseconds. Floating point only appears
//! in the reporting layer ([`metrics`]).

pub mod engine;
pub mod entities;
pub mod metrics;
pub mod policies;
pub mod workload;

pub use engine::{EngineError, Event, EventKind, EventQueue, RunOutcome, SimulationRun};
pub use entities::{
    exec_duration, BlockchainLease, CisRegistry, DatacenterSpec, EntityError, HandshakeStep,
    LeaseRegistry, VmSpec, VmState, World, WorldEvent,
};
pub use metrics::{
    compute_report, load_cov, starved_count, MetricsError, MetricsReport, TaskRecord,
};
pub use policies::{
    assign_vm, effective_priority, select_fcfs, select_hybrid, select_priority, select_sjf,
    AgingQuantum, HybridParams, Policy, PolicyError, PolicyId, ReadyTask,
};
pub use workload::{
    generate, load_csv, write_csv, ArrivalModel, Cloudlet, LengthDist, PriorityDist, Prng,
    WorkloadConfig, WorkloadError,
};

/// Simulation time in milliseconds.
pub type Millis = u64;
pub type CloudletId = u64;
pub type UserId = u64;
pub type VmId = u32;
pub type ChainId = u64;
pub type LeaseId = u64;
pub type DcId = u32;
