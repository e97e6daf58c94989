//! Joint cache placement and channel allocation for D2D-assisted
//! heterogeneous cellular networks: delay bounds, heuristics, an exact
//! solver, an ILP emitter and an experiment harness.

pub mod allocation;
pub mod bounds;
pub mod caching;
pub mod delivery;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod ilp;
pub mod montecarlo;
pub mod popularity;
pub mod special;
pub mod topology;

pub use allocation::{allocate_channels, ChannelAllocation};
pub use bounds::{DelayBound, DelayBoundTable, LinkBoundParams};
pub use caching::{baseline_no_d2d, place_all, Placement};
pub use delivery::{evaluate_deliveries, Assignment, BinaryMatrix, DeliveryEvaluation, Violation};
pub use error::{Error, Result};
pub use exact::{check_solution, solve_exhaustive, FeasibilityReport, SolveLimits, SolveResult};
pub use experiments::{run_bound_validation, run_method, run_sweep, ExperimentSweep, Method, Scenario, ScenarioConfig};
pub use ilp::{build_ilp, emit_ilp, IlpOptions, LpModel};
pub use popularity::PopularityModel;
pub use topology::{NetworkInstance, NetworkParams, NodeId, NodeKind, Point};
