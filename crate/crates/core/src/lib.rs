//! Solver suite for synchronized sprayer / tender-tanker field operations.
//!
//! A single tender tanker refills a fleet of sprayers out in the field while
//! each sprayer works through its assigned spray nodes. The crate provides:
//!
//! - [`instance`]: problem instances, validation, random generation, JSON I/O
//! - [`schedule`]: the deterministic timetable engine (refills, tanker trips,
//!   synchronization, objectives)
//! - [`construction`]: cluster-first route-second initial solutions
//! - [`alns`]: adaptive large neighborhood search with destroy/repair
//!   operators, simulated-annealing acceptance and adaptive weights
//! - [`oracle`]: brute-force optima for tiny instances and the fixed-routes
//!   subproblem optimizer used for intensification
//! - [`milp`]: symbolic MILP construction, LP export and exact solution
//!   validation
//! - [`baseline`]: the route-first cluster-second field practice

pub mod alns;
pub mod baseline;
pub mod construction;
pub mod fixtures;
pub mod instance;
pub mod milp;
pub mod oracle;
pub mod schedule;

pub use instance::{GeneratorConfig, Instance, InstanceError, Node, TripBudget};
pub use schedule::{
    ModelVariant, Refills, ScheduleError, Solution, SprayerRoute, TankerPlan, TankerStop,
    TankerTrip,
};
