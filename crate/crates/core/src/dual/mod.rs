//! Dual lineage process: walkers that alternate between activity and
//! dormancy and merge at rate `d` when they meet while active.

mod coalescent;
mod hazard;
mod lineage;
mod pair;

pub use coalescent::{run_coalescent, CoalescentHistory, Event, EventKind};
pub use hazard::{
    estimate_hazard, joint_activity_bursts, joint_activity_profile, Bursts, HazardEstimate, HazardPoint, Interval,
    PLATEAU_GROWTH,
};
pub use lineage::{dual_field, moment_dual_expectation, Lineage, LineageDynamics, StepKind};
pub use pair::PairDual;
